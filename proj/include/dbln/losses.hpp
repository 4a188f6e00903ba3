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
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dbln/diffcore.hpp"

namespace dbln {

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

namespace detail {

// Series expansion of P(a, x); converges quickly for x < a + 1.
inline double gamma_p_series(double a, double x) {
  double ap = a;
  double term = 1.0 / a;
  double total = term;
  for (int n = 0; n < 1000; ++n) {
    ap += 1.0;
    term *= x / ap;
    total += term;
    if (std::abs(term) < std::abs(total) * 1e-16) break;
  }
  return total * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Modified Lentz continued fraction for Q(a, x); used for x >= a + 1.
inline double gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

/// Regularized lower incomplete gamma P(a, x).
inline double regularized_gamma_p(double a, double x) {
  if (!(a > 0)) throw std::invalid_argument("regularized_gamma_p: a must be positive");
  if (x <= 0) return 0.0;
  if (x < a + 1.0) return detail::gamma_p_series(a, x);
  return 1.0 - detail::gamma_q_fraction(a, x);
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), computed directly in the tail.
inline double regularized_gamma_q(double a, double x) {
  if (!(a > 0)) throw std::invalid_argument("regularized_gamma_q: a must be positive");
  if (x <= 0) return 1.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_fraction(a, x);
}

inline double chi_square_cdf(double x, double dof) { return regularized_gamma_p(0.5 * dof, 0.5 * x); }
inline double chi_square_sf(double x, double dof) { return regularized_gamma_q(0.5 * dof, 0.5 * x); }

// ---------------------------------------------------------------------------
// Autocorrelation and whiteness
// ---------------------------------------------------------------------------

/// Biased sample autocorrelation at lag k; 0 for a (numerically) constant series.
inline double autocorr(std::span<const double> r, std::size_t k) {
  const std::size_t n = r.size();
  if (k == 0 || k >= n) {
    throw std::invalid_argument("autocorrelation lag " + std::to_string(k) +
                                " must lie in [1, " + std::to_string(n) + ")");
  }
  double mean = 0.0;
  for (double v : r) mean += v;
  mean /= static_cast<double>(n);
  double den = 0.0;
  for (double v : r) den += (v - mean) * (v - mean);
  if (den < 1e-12) return 0.0;
  double num = 0.0;
  for (std::size_t t = 0; t + k < n; ++t) num += (r[t] - mean) * (r[t + k] - mean);
  return num / den;
}

inline void check_max_lag(std::size_t length, std::size_t max_lag) {
  if (max_lag == 0 || max_lag >= length) {
    throw std::invalid_argument("max lag " + std::to_string(max_lag) + " must lie in [1, " +
                                std::to_string(length) + ")");
  }
}

/// sum_{k=1..m} rho_k^2 / (T - k).
inline double q_loss(std::span<const double> r, std::size_t max_lag) {
  check_max_lag(r.size(), max_lag);
  double total = 0.0;
  for (std::size_t k = 1; k <= max_lag; ++k) {
    const double rho = autocorr(r, k);
    total += rho * rho / static_cast<double>(r.size() - k);
  }
  return total;
}

/// Differentiable Q loss on a residual tensor.
inline Tensor q_loss(const Tensor& r, std::size_t max_lag) {
  const std::size_t n = r.size();
  check_max_lag(n, max_lag);
  const Tensor centered = sub(r, mean(r));
  const Tensor den = sum(square(centered));
  if (den.item() < 1e-12) return Tensor::scalar(0.0);
  Tensor total;
  for (std::size_t k = 1; k <= max_lag; ++k) {
    const Tensor num = dot(slice(centered, 0, n - k), slice(centered, k, n));
    const Tensor term = mul_scalar(square(div(num, den)), 1.0 / static_cast<double>(n - k));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

struct WhitenessReport {
  std::vector<double> rho;
  double q = 0.0;
  double p_value = 1.0;
  std::size_t max_lag = 0;
};

inline void to_json(nlohmann::json& j, const WhitenessReport& w) {
  j = {{"rho", w.rho}, {"Q", w.q}, {"p_value", w.p_value}, {"m", w.max_lag}};
}

/// Ljung-Box portmanteau test with m degrees of freedom.
inline WhitenessReport ljung_box(std::span<const double> r, std::size_t max_lag) {
  check_max_lag(r.size(), max_lag);
  const double n = static_cast<double>(r.size());
  WhitenessReport report;
  report.max_lag = max_lag;
  double core = 0.0;
  for (std::size_t k = 1; k <= max_lag; ++k) {
    const double rho = autocorr(r, k);
    report.rho.push_back(rho);
    core += rho * rho / (n - static_cast<double>(k));
  }
  report.q = n * (n + 2.0) * core;
  report.p_value = chi_square_sf(report.q, static_cast<double>(max_lag));
  return report;
}

// ---------------------------------------------------------------------------
// Residual and likelihood terms
// ---------------------------------------------------------------------------

inline Tensor residual_mse(const Tensor& r) { return mean(square(r)); }

/// Negative Gaussian log-likelihood of `y` under N(forecast, sigma^2).
inline Tensor gaussian_nll(const Tensor& forecast, const Tensor& sigma, double y) {
  if (!std::isfinite(sigma.item())) throw std::domain_error("gaussian_nll: sigma is not finite");
  if (!(sigma.item() > 0)) throw std::invalid_argument("gaussian_nll: sigma must be positive");
  const double log_sqrt_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const Tensor err = add_scalar(forecast, -y);
  const Tensor quad = div(square(err), mul_scalar(square(sigma), 2.0));
  return add_scalar(add(log(sigma), quad), log_sqrt_2pi);
}

inline double gaussian_nll(double forecast, double sigma, double y) {
  if (!std::isfinite(sigma)) throw std::domain_error("gaussian_nll: sigma is not finite");
  if (!(sigma > 0)) throw std::invalid_argument("gaussian_nll: sigma must be positive");
  const double e = forecast - y;
  return 0.5 * std::log(2.0 * std::numbers::pi) + std::log(sigma) + e * e / (2.0 * sigma * sigma);
}

// ---------------------------------------------------------------------------
// Total loss
// ---------------------------------------------------------------------------

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double q = 1.0;
  double gaussian = 1.0;
};

struct LossBreakdown {
  double alpha_sum = 0.0;
  double beta_sum = 0.0;
  double gamma = 0.0;
  double q_loss = 0.0;
  double gaussian = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    alpha_sum += o.alpha_sum;
    beta_sum += o.beta_sum;
    gamma += o.gamma;
    q_loss += o.q_loss;
    gaussian += o.gaussian;
    total += o.total;
    return *this;
  }
  LossBreakdown& operator/=(double n) {
    alpha_sum /= n;
    beta_sum /= n;
    gamma /= n;
    q_loss /= n;
    gaussian /= n;
    total /= n;
    return *this;
  }
};

inline void to_json(nlohmann::json& j, const LossBreakdown& b) {
  j = {{"alpha_sum", b.alpha_sum}, {"beta_sum", b.beta_sum}, {"gamma", b.gamma},
       {"q_loss", b.q_loss},       {"gaussian", b.gaussian}, {"total", b.total}};
}

namespace detail {
inline void require_finite(double v, const char* name) {
  if (std::isnan(v) || std::isinf(v)) throw std::domain_error(std::string("non-finite loss term: ") + name);
}
}  // namespace detail

inline LossBreakdown total_loss(std::span<const double> alphas, std::span<const double> betas,
                                double gamma, double q, double gaussian,
                                const LossWeights& w = {}) {
  LossBreakdown b;
  for (double a : alphas) b.alpha_sum += a;
  for (double v : betas) b.beta_sum += v;
  b.gamma = gamma;
  b.q_loss = q;
  b.gaussian = gaussian;
  detail::require_finite(b.alpha_sum, "alpha");
  detail::require_finite(b.beta_sum, "beta");
  detail::require_finite(gamma, "gamma");
  detail::require_finite(q, "q_loss");
  detail::require_finite(gaussian, "gaussian");
  b.total = w.alpha * b.alpha_sum + w.beta * b.beta_sum + w.gamma * gamma + w.q * q +
            w.gaussian * gaussian;
  return b;
}

struct WeightedLoss {
  Tensor total;
  LossBreakdown breakdown;
};

/// Differentiable weighted sum of all terms. Terms whose weight is zero are
/// reported but left out of the graph.
inline WeightedLoss total_loss(const std::vector<Tensor>& alphas, const std::vector<Tensor>& betas,
                               const Tensor& gamma, const Tensor& q, const Tensor& gaussian,
                               const LossWeights& w = {}) {
  std::vector<double> av, bv;
  for (const auto& a : alphas) av.push_back(a.item());
  for (const auto& b : betas) bv.push_back(b.item());
  WeightedLoss out;
  out.breakdown = total_loss(av, bv, gamma.item(), q.item(), gaussian.item(), w);

  std::vector<Tensor> terms;
  auto push = [&](const Tensor& t, double weight) {
    if (weight != 0.0) terms.push_back(mul_scalar(t, weight));
  };
  for (const auto& a : alphas) push(a, w.alpha);
  for (const auto& b : betas) push(b, w.beta);
  push(gamma, w.gamma);
  push(q, w.q);
  push(gaussian, w.gaussian);
  if (terms.empty()) {
    out.total = Tensor::scalar(0.0);
    return out;
  }
  Tensor acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  out.total = acc;
  return out;
}

}  // namespace dbln
