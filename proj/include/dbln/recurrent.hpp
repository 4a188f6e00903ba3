// Copyright 2026 The DBLN Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "dbln/diffcore.hpp"
#include "dbln/params.hpp"

namespace dbln {

/// One LSTM direction over a scalar input sequence. Gate order in the packed
/// weights is input, forget, cell candidate, output.
struct LstmDirectionParams {
  Tensor w_ih;  // [4H]
  Tensor w_hh;  // [4H, H]
  Tensor bias;  // [4H]

  std::size_t hidden() const { return w_hh.shape()[1]; }
};

struct BiLstmParams {
  LstmDirectionParams forward;
  LstmDirectionParams reverse;
  Tensor proj_w;  // [H, d+1], shared by both directions
  Tensor proj_b;  // [d+1]

  std::size_t hidden() const { return forward.hidden(); }
  std::size_t degree() const { return proj_b.size() - 1; }
};

namespace detail {

inline LstmDirectionParams register_direction(ParamStore& store, const std::string& prefix,
                                              std::size_t hidden, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> uni(-bound, bound);
  auto draw = [&](std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = uni(rng);
    return v;
  };
  const std::size_t gates = 4 * hidden;
  LstmDirectionParams p;
  p.w_ih = store.add(prefix + ".w_ih", {gates}, draw(gates));
  p.w_hh = store.add(prefix + ".w_hh", {gates, hidden}, draw(gates * hidden));
  auto bias = draw(gates);
  for (std::size_t k = hidden; k < 2 * hidden; ++k) bias[k] = 1.0;  // forget gate
  p.bias = store.add(prefix + ".bias", {gates}, std::move(bias));
  return p;
}

inline LstmDirectionParams bind_direction(ParamStore& store, const std::string& prefix) {
  return {store.get(prefix + ".w_ih"), store.get(prefix + ".w_hh"), store.get(prefix + ".bias")};
}

}  // namespace detail

/// Registers a freshly initialized bi-LSTM coefficient head under `prefix`.
/// Weights are uniform in +-1/sqrt(H); forget-gate biases start at +1 and the
/// projection bias at 0.
inline BiLstmParams register_bilstm(ParamStore& store, const std::string& prefix,
                                    std::size_t hidden, std::size_t degree, std::mt19937_64& rng) {
  if (hidden == 0) throw std::invalid_argument("LSTM hidden size must be positive");
  BiLstmParams p;
  p.forward = detail::register_direction(store, prefix + ".fwd", hidden, rng);
  p.reverse = detail::register_direction(store, prefix + ".rev", hidden, rng);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> uni(-bound, bound);
  std::vector<double> w(hidden * (degree + 1));
  for (double& x : w) x = uni(rng);
  p.proj_w = store.add(prefix + ".proj_w", {hidden, degree + 1}, std::move(w));
  p.proj_b = store.add(prefix + ".proj_b", {degree + 1}, std::vector<double>(degree + 1, 0.0));
  return p;
}

inline BiLstmParams bind_bilstm(ParamStore& store, const std::string& prefix) {
  return {detail::bind_direction(store, prefix + ".fwd"), detail::bind_direction(store, prefix + ".rev"),
          store.get(prefix + ".proj_w"), store.get(prefix + ".proj_b")};
}

/// Runs one direction over z (zero initial state) and returns the [T, H]
/// hidden states aligned with time: row t is the state after consuming z_t.
/// With `reverse`, the sequence is consumed from z_T down to z_1.
inline Tensor lstm_direction(const Tensor& z, const LstmDirectionParams& p, bool reverse) {
  const std::size_t steps = z.size();
  const std::size_t hid = p.hidden();
  const std::size_t gates = 4 * hid;
  if (p.w_ih.size() != gates || p.bias.size() != gates || p.w_hh.size() != gates * hid) {
    throw ShapeError("inconsistent LSTM parameter shapes: w_ih " + shape_string(p.w_ih.shape()) +
                     ", w_hh " + shape_string(p.w_hh.shape()) + ", bias " +
                     shape_string(p.bias.shape()));
  }

  // Per processed step: activated gates, cell state, hidden state.
  auto act = std::make_shared<std::vector<double>>(steps * gates);
  auto cell = std::make_shared<std::vector<double>>(steps * hid);
  std::vector<double> out(steps * hid);

  const double* wih = p.w_ih.values().data();
  const double* whh = p.w_hh.values().data();
  const double* bv = p.bias.values().data();
  const double* zv = z.values().data();
  std::vector<double> pre(gates);
  const std::vector<double> zero(hid, 0.0);

  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    const double* h_prev = s == 0 ? zero.data() : out.data() + (reverse ? t + 1 : t - 1) * hid;
    const double* c_prev = s == 0 ? zero.data() : cell->data() + (s - 1) * hid;
    for (std::size_t g = 0; g < gates; ++g) {
      double a = bv[g] + wih[g] * zv[t];
      const double* wrow = whh + g * hid;
      for (std::size_t k = 0; k < hid; ++k) a += wrow[k] * h_prev[k];
      pre[g] = a;
    }
    double* a = act->data() + s * gates;
    double* c = cell->data() + s * hid;
    double* h = out.data() + t * hid;
    for (std::size_t k = 0; k < hid; ++k) {
      a[k] = sigmoid(pre[k]);
      a[hid + k] = sigmoid(pre[hid + k]);
      a[2 * hid + k] = std::tanh(pre[2 * hid + k]);
      a[3 * hid + k] = sigmoid(pre[3 * hid + k]);
      c[k] = a[hid + k] * c_prev[k] + a[k] * a[2 * hid + k];
      h[k] = a[3 * hid + k] * std::tanh(c[k]);
    }
  }

  return make_op(
      {steps, hid}, std::move(out), {z, p.w_ih, p.w_hh, p.bias},
      [z, p, reverse, steps, hid, gates, act, cell](detail::Node& self) {
        double* gz = grad_of(z);
        double* gwih = grad_of(p.w_ih);
        double* gwhh = grad_of(p.w_hh);
        double* gb = grad_of(p.bias);
        const double* wih = p.w_ih.values().data();
        const double* whh = p.w_hh.values().data();
        const double* zv = z.values().data();
        const std::vector<double>& hs = self.value;

        std::vector<double> dh_next(hid, 0.0);
        std::vector<double> dc_next(hid, 0.0);
        std::vector<double> da(gates);
        for (std::size_t s = steps; s-- > 0;) {
          const std::size_t t = reverse ? steps - 1 - s : s;
          const double* a = act->data() + s * gates;
          const double* c = cell->data() + s * hid;
          const double* c_prev = s == 0 ? nullptr : cell->data() + (s - 1) * hid;
          const double* h_prev = s == 0 ? nullptr : hs.data() + (reverse ? t + 1 : t - 1) * hid;
          for (std::size_t k = 0; k < hid; ++k) {
            const double dh = self.grad[t * hid + k] + dh_next[k];
            const double tc = std::tanh(c[k]);
            const double ig = a[k], fg = a[hid + k], gg = a[2 * hid + k], og = a[3 * hid + k];
            const double dc = dh * og * (1.0 - tc * tc) + dc_next[k];
            da[k] = dc * gg * ig * (1.0 - ig);
            da[hid + k] = c_prev ? dc * c_prev[k] * fg * (1.0 - fg) : 0.0;
            da[2 * hid + k] = dc * ig * (1.0 - gg * gg);
            da[3 * hid + k] = dh * tc * og * (1.0 - og);
            dc_next[k] = dc * fg;
          }
          std::fill(dh_next.begin(), dh_next.end(), 0.0);
          double dz = 0.0;
          for (std::size_t g = 0; g < gates; ++g) {
            const double d = da[g];
            if (gb) gb[g] += d;
            if (gwih) gwih[g] += d * zv[t];
            dz += wih[g] * d;
            const double* wrow = whh + g * hid;
            if (h_prev) {
              if (gwhh) {
                double* grow = gwhh + g * hid;
                for (std::size_t k = 0; k < hid; ++k) grow[k] += d * h_prev[k];
              }
              for (std::size_t k = 0; k < hid; ++k) dh_next[k] += wrow[k] * d;
            }
          }
          if (gz) gz[t] += dz;
        }
      });
}

/// Per-point polynomial coefficients [T, d+1]: the shared projection applied
/// to the forward and reverse hidden states, averaged.
inline Tensor coeff_head(const Tensor& z, const BiLstmParams& p) {
  const Tensor hf = lstm_direction(z, p.forward, false);
  const Tensor hr = lstm_direction(z, p.reverse, true);
  const Tensor avg = mul_scalar(add(hf, hr), 0.5);
  return add_rows(matmul(avg, p.proj_w), p.proj_b);
}

}  // namespace dbln
