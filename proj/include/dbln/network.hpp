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

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dbln/baseline_math.hpp"
#include "dbln/diffcore.hpp"
#include "dbln/losses.hpp"
#include "dbln/params.hpp"
#include "dbln/recurrent.hpp"

namespace dbln {

struct ModelConfig {
  std::size_t window = 120;
  std::size_t blocks = 8;
  std::vector<double> bandwidths{8, 8, 8, 8, 6, 6, 6, 6};
  std::size_t degree = 1;
  KernelKind kernel = KernelKind::TriCube;
  std::size_t hidden = 32;
  std::size_t max_lag = 0;  // 0 selects min(10, T/5)
  double sigma_floor = 1e-4;
  LossWeights weights;

  /// Hourly benchmark setting: 8 blocks, H = [8,8,8,8,6,6,6,6], d = 1.
  static ModelConfig yahoo() { return ModelConfig{}; }

  /// Minutely benchmark setting: 12 blocks, H = [10 x4, 8 x4, 6 x4], d = 1.
  static ModelConfig kpi() {
    ModelConfig c;
    c.blocks = 12;
    c.bandwidths = {10, 10, 10, 10, 8, 8, 8, 8, 6, 6, 6, 6};
    return c;
  }

  std::size_t effective_max_lag() const {
    if (max_lag != 0) return max_lag;
    return std::max<std::size_t>(1, std::min<std::size_t>(10, window / 5));
  }

  void validate() const {
    if (window < 2) throw std::invalid_argument("model.window must be at least 2");
    if (blocks == 0) throw std::invalid_argument("model.blocks must be positive");
    if (bandwidths.size() != blocks) {
      throw std::invalid_argument("model.bandwidths has " + std::to_string(bandwidths.size()) +
                                  " entries but model.blocks is " + std::to_string(blocks));
    }
    for (double h : bandwidths) {
      if (!(h > 0)) throw std::invalid_argument("model.bandwidths entries must be positive");
    }
    if (hidden == 0) throw std::invalid_argument("model.hidden must be positive");
    if (effective_max_lag() >= window) throw std::invalid_argument("model.max_lag must be < window");
    if (!(sigma_floor > 0)) throw std::invalid_argument("model.sigma_floor must be positive");
    for (double w : {weights.alpha, weights.beta, weights.gamma, weights.q, weights.gaussian}) {
      if (!(w >= 0)) throw std::invalid_argument("model.loss_weights must be non-negative");
    }
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"window", c.window},
       {"blocks", c.blocks},
       {"bandwidths", c.bandwidths},
       {"degree", c.degree},
       {"kernel", std::string(to_string(c.kernel))},
       {"hidden", c.hidden},
       {"max_lag", c.max_lag},
       {"sigma_floor", c.sigma_floor},
       {"loss_weights",
        {{"alpha", c.weights.alpha},
         {"beta", c.weights.beta},
         {"gamma", c.weights.gamma},
         {"q", c.weights.q},
         {"gaussian", c.weights.gaussian}}}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.window = j.at("window").get<std::size_t>();
  c.blocks = j.at("blocks").get<std::size_t>();
  c.bandwidths = j.at("bandwidths").get<std::vector<double>>();
  c.degree = j.at("degree").get<std::size_t>();
  c.kernel = parse_kernel(j.at("kernel").get<std::string>());
  c.hidden = j.at("hidden").get<std::size_t>();
  c.max_lag = j.at("max_lag").get<std::size_t>();
  c.sigma_floor = j.at("sigma_floor").get<double>();
  const auto& w = j.at("loss_weights");
  c.weights = {w.at("alpha").get<double>(), w.at("beta").get<double>(), w.at("gamma").get<double>(),
               w.at("q").get<double>(), w.at("gaussian").get<double>()};
}

struct BlockOutput {
  Tensor backcast;
  Tensor forecast;
  Tensor alpha;
  Tensor beta;
};

struct StackOutput {
  Tensor forecast;
  Tensor sigma;
  Tensor residual;
  std::vector<BlockOutput> blocks;
};

/// One baseline block: coefficients from the bi-LSTM, then the local regression layer.
inline BlockOutput block_forward(const Tensor& z, const BiLstmParams& params,
                                 const std::shared_ptr<const KernelGrid>& grid) {
  const Tensor theta = coeff_head(z, params);
  BlockOutput out;
  out.backcast = backcast(theta);
  out.forecast = forecast_next(theta, *grid);
  out.alpha = local_reg_loss(theta, z, grid);
  out.beta = smoothness_loss(out.backcast);
  return out;
}

/// softplus(w . r + b) + floor.
inline Tensor sigma_head(const Tensor& residual, const Tensor& weight, const Tensor& bias,
                         double sigma_floor) {
  return add_scalar(softplus(add(dot(weight, residual), bias)), sigma_floor);
}

class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < config_.blocks; ++l) {
      register_bilstm(params_, block_prefix(l), config_.hidden, config_.degree, rng);
    }
    params_.add("sigma.w", {config_.window}, std::vector<double>(config_.window, 0.0));
    params_.add("sigma.b", {1}, {0.0});
    bind();
  }

  Model(ModelConfig config, ParamStore params) : config_(std::move(config)), params_(std::move(params)) {
    config_.validate();
    bind();
  }

  Model(const Model& other) : config_(other.config_), params_(other.params_) { bind(); }
  Model& operator=(const Model& other) {
    if (this != &other) {
      config_ = other.config_;
      params_ = other.params_;
      bind();
    }
    return *this;
  }
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const BiLstmParams& block(std::size_t l) const { return blocks_.at(l); }

  /// Runs the stack on an already normalized look-back window.
  StackOutput forward(std::span<const double> window) const {
    if (window.size() != config_.window) {
      throw ShapeError("window of length " + std::to_string(window.size()) +
                       " given to a model with T = " + std::to_string(config_.window));
    }
    StackOutput out;
    Tensor z = Tensor::vector({window.begin(), window.end()});
    Tensor forecast;
    for (std::size_t l = 0; l < config_.blocks; ++l) {
      BlockOutput b = block_forward(z, blocks_[l], grids_[l]);
      forecast = forecast.defined() ? add(forecast, b.forecast) : b.forecast;
      z = sub(z, b.backcast);
      out.blocks.push_back(std::move(b));
    }
    out.forecast = forecast;
    out.residual = z;
    out.sigma = sigma_head(z, sigma_w_, sigma_b_, config_.sigma_floor);
    return out;
  }

  nlohmann::json to_json() const {
    return {{"format", "dbln.model"}, {"version", 1}, {"config", config_}, {"params", params_.to_json()}};
  }

  static Model from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "dbln.model") throw std::runtime_error("not a dbln model checkpoint");
    return Model(j.at("config").get<ModelConfig>(), ParamStore::from_json(j.at("params")));
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out << to_json().dump() << '\n';
  }

  static Model load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path);
    return from_json(nlohmann::json::parse(in));
  }

  static std::string block_prefix(std::size_t l) { return "block" + std::to_string(l); }

 private:
  void bind() {
    blocks_.clear();
    grids_.clear();
    for (std::size_t l = 0; l < config_.blocks; ++l) {
      blocks_.push_back(bind_bilstm(params_, block_prefix(l)));
      grids_.push_back(cached_kernel_grid(config_.window, config_.bandwidths[l], config_.kernel));
    }
    sigma_w_ = params_.get("sigma.w");
    sigma_b_ = params_.get("sigma.b");
  }

  ModelConfig config_;
  ParamStore params_;
  std::vector<BiLstmParams> blocks_;
  std::vector<std::shared_ptr<const KernelGrid>> grids_;
  Tensor sigma_w_;
  Tensor sigma_b_;
};

/// Training objective for one normalized window.
inline WeightedLoss window_loss(const StackOutput& out, double target, const ModelConfig& config) {
  std::vector<Tensor> alphas, betas;
  for (const auto& b : out.blocks) {
    alphas.push_back(b.alpha);
    betas.push_back(b.beta);
  }
  return total_loss(alphas, betas, residual_mse(out.residual),
                    q_loss(out.residual, config.effective_max_lag()),
                    gaussian_nll(out.forecast, out.sigma, target), config.weights);
}

}  // namespace dbln
