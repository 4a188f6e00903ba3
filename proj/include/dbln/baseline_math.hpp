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

// Kernel-weighted local polynomial regression with externally supplied
// coefficients. Point t of a window owns a polynomial in the local coordinate
// u = (j - t) / H, so its value at its own index is the intercept.

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "dbln/diffcore.hpp"

namespace dbln {

enum class KernelKind { Gaussian, TriCube };

inline std::string_view to_string(KernelKind kind) {
  return kind == KernelKind::Gaussian ? "gaussian" : "tricube";
}

inline KernelKind parse_kernel(std::string_view name) {
  if (name == "gaussian") return KernelKind::Gaussian;
  if (name == "tricube") return KernelKind::TriCube;
  throw std::invalid_argument("unknown kernel '" + std::string(name) + "' (expected gaussian|tricube)");
}

/// Weight of index j in the regression centered on index i.
/// Gaussian: exp(-(i-j)^2 / 2H). Tri-cube: (1 - u^3)^3 with u = |i-j| / H, zero for u > 1.
inline double kernel_weight(KernelKind kind, double i, double j, double bandwidth) {
  if (!(bandwidth > 0)) throw std::invalid_argument("kernel bandwidth must be positive");
  const double d = i - j;
  if (kind == KernelKind::Gaussian) return std::exp(-d * d / (2.0 * bandwidth));
  const double u = std::abs(d) / bandwidth;
  if (u > 1.0) return 0.0;
  const double c = 1.0 - u * u * u;
  return c * c * c;
}

struct KernelGrid {
  std::size_t length = 0;
  double bandwidth = 1.0;
  KernelKind kind = KernelKind::TriCube;
  std::vector<double> weights;           // row-major length x length, entry (i,j) = K_i(x_j)
  std::vector<double> forecast_weights;  // K_i(x_{T+1})

  double weight(std::size_t i, std::size_t j) const { return weights[i * length + j]; }
};

inline KernelGrid make_kernel_grid(std::size_t length, double bandwidth, KernelKind kind) {
  if (length == 0) throw std::invalid_argument("kernel grid needs a positive window length");
  KernelGrid grid{length, bandwidth, kind, std::vector<double>(length * length),
                  std::vector<double>(length)};
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t j = 0; j < length; ++j) {
      grid.weights[i * length + j] =
          kernel_weight(kind, static_cast<double>(i), static_cast<double>(j), bandwidth);
    }
    grid.forecast_weights[i] =
        kernel_weight(kind, static_cast<double>(i), static_cast<double>(length), bandwidth);
  }
  return grid;
}

/// Shared immutable grid per (length, bandwidth, kind).
inline std::shared_ptr<const KernelGrid> cached_kernel_grid(std::size_t length, double bandwidth,
                                                            KernelKind kind) {
  static std::mutex mutex;
  static std::map<std::tuple<std::size_t, double, int>, std::shared_ptr<const KernelGrid>> cache;
  const auto key = std::make_tuple(length, bandwidth, static_cast<int>(kind));
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto grid = std::make_shared<const KernelGrid>(make_kernel_grid(length, bandwidth, kind));
  cache.emplace(key, grid);
  return grid;
}

/// P_t evaluated at index j: sum_k theta_k * ((j - t) / H)^k.
inline double eval_poly(std::span<const double> theta_row, double j, double t, double bandwidth) {
  const double u = (j - t) / bandwidth;
  double acc = 0.0;
  double power = 1.0;
  for (double c : theta_row) {
    acc += c * power;
    power *= u;
  }
  return acc;
}

/// In-window fit: each point's polynomial at its own index, i.e. the intercept column.
inline Tensor backcast(const Tensor& theta) { return column(theta, 0); }

/// Coefficient matrix C with f_{T+1} = sum(theta .* C): kernel weights over
/// their sum times the powers of each point's coordinate at T+1.
inline std::vector<double> forecast_basis(const KernelGrid& grid, std::size_t degree) {
  const std::size_t cols = degree + 1;
  const std::size_t length = grid.length;
  std::vector<double> basis(length * cols, 0.0);
  double total = 0.0;
  for (double w : grid.forecast_weights) total += w;
  auto fill_row = [&](std::size_t i, double scale) {
    const double u = static_cast<double>(length - i) / grid.bandwidth;
    double power = 1.0;
    for (std::size_t k = 0; k < cols; ++k) {
      basis[i * cols + k] = scale * power;
      power *= u;
    }
  };
  if (total < 1e-12) {
    fill_row(length - 1, 1.0);  // empty support: extrapolate the last point's polynomial
  } else {
    for (std::size_t i = 0; i < length; ++i) {
      if (grid.forecast_weights[i] > 0) fill_row(i, grid.forecast_weights[i] / total);
    }
  }
  return basis;
}

inline Tensor forecast_next(const Tensor& theta, const KernelGrid& grid) {
  if (theta.rank() != 2 || theta.shape()[0] != grid.length) {
    throw ShapeError("coefficient matrix " + shape_string(theta.shape()) +
                     " does not match kernel grid of length " + std::to_string(grid.length));
  }
  const std::size_t degree = theta.shape()[1] - 1;
  const Tensor basis = Tensor::from(theta.shape(), forecast_basis(grid, degree));
  return sum(mul(theta, basis));
}

/// alpha = 1/T^2 * sum_i sum_j K_i(x_j) (P_i(x_j) - z_j)^2, differentiable in theta and z.
inline Tensor local_reg_loss(const Tensor& theta, const Tensor& z,
                             std::shared_ptr<const KernelGrid> grid_ptr) {
  const KernelGrid& grid = *grid_ptr;
  const std::size_t length = grid.length;
  if (theta.rank() != 2 || theta.shape()[0] != length || z.size() != length) {
    throw ShapeError("shape mismatch in local_reg_loss: theta " + shape_string(theta.shape()) +
                     ", z " + shape_string(z.shape()) + ", grid length " + std::to_string(length));
  }
  const std::size_t cols = theta.shape()[1];
  const double norm = 1.0 / static_cast<double>(length * length);
  const double inv_h = 1.0 / grid.bandwidth;
  const double* th = theta.values().data();
  const double* zv = z.values().data();

  double loss = 0.0;
  for (std::size_t i = 0; i < length; ++i) {
    const double* row = th + i * cols;
    for (std::size_t j = 0; j < length; ++j) {
      const double w = grid.weight(i, j);
      if (w == 0.0) continue;
      const double u = (static_cast<double>(j) - static_cast<double>(i)) * inv_h;
      double p = 0.0;
      double power = 1.0;
      for (std::size_t k = 0; k < cols; ++k) {
        p += row[k] * power;
        power *= u;
      }
      const double e = p - zv[j];
      loss += w * e * e;
    }
  }

  return make_op({}, {loss * norm}, {theta, z},
                 [theta, z, grid_ptr, length, cols, norm, inv_h](detail::Node& self) {
                   const KernelGrid& grid = *grid_ptr;
                   double* gt = grad_of(theta);
                   double* gz = grad_of(z);
                   const double* th = theta.values().data();
                   const double* zv = z.values().data();
                   const double g = self.grad[0] * 2.0 * norm;
                   for (std::size_t i = 0; i < length; ++i) {
                     const double* row = th + i * cols;
                     for (std::size_t j = 0; j < length; ++j) {
                       const double w = grid.weight(i, j);
                       if (w == 0.0) continue;
                       const double u =
                           (static_cast<double>(j) - static_cast<double>(i)) * inv_h;
                       double p = 0.0;
                       double power = 1.0;
                       for (std::size_t k = 0; k < cols; ++k) {
                         p += row[k] * power;
                         power *= u;
                       }
                       const double d = g * w * (p - zv[j]);
                       if (gt) {
                         power = 1.0;
                         for (std::size_t k = 0; k < cols; ++k) {
                           gt[i * cols + k] += d * power;
                           power *= u;
                         }
                       }
                       if (gz) gz[j] -= d;
                     }
                   }
                 });
}

inline Tensor local_reg_loss(const Tensor& theta, const Tensor& z, const KernelGrid& grid) {
  return local_reg_loss(theta, z, std::make_shared<const KernelGrid>(grid));
}

/// beta = 1/T * sum over interior t of the squared second difference; 0 when T < 3.
inline Tensor smoothness_loss(const Tensor& b) {
  const std::size_t length = b.size();
  if (length < 3) return Tensor::scalar(0.0);
  const Tensor second = slice(b, 2, length) - 2.0 * slice(b, 1, length - 1) + slice(b, 0, length - 2);
  return mul_scalar(sum(square(second)), 1.0 / static_cast<double>(length));
}

}  // namespace dbln
