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
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dbln/losses.hpp"
#include "dbln/network.hpp"
#include "dbln/params.hpp"

namespace dbln {

inline constexpr double kMinWindowScale = 1e-8;

/// Look-back values followed by the target. mean/scale are identity until normalize().
struct Window {
  std::vector<double> values;
  std::size_t origin = 0;
  double mean = 0.0;
  double scale = 1.0;

  std::span<const double> lookback() const { return {values.data(), values.size() - 1}; }
  double target() const { return values.back(); }
};

/// Windows [i, i + T] for i = 0, stride, 2 * stride, ...
inline std::vector<Window> make_windows(std::span<const double> series, std::size_t length,
                                        std::size_t stride = 1) {
  if (length == 0 || stride == 0) throw std::invalid_argument("window length and stride must be positive");
  if (series.size() < length + 1) {
    throw std::invalid_argument("series of length " + std::to_string(series.size()) +
                                " is too short: need at least " + std::to_string(length + 1) +
                                " points for T = " + std::to_string(length));
  }
  std::vector<Window> out;
  for (std::size_t i = 0; i + length < series.size(); i += stride) {
    out.push_back(Window{{series.begin() + static_cast<std::ptrdiff_t>(i),
                          series.begin() + static_cast<std::ptrdiff_t>(i + length + 1)},
                         i});
  }
  return out;
}

/// z-scores the whole window with statistics of the look-back only.
inline Window normalize(const Window& w) {
  const auto lb = w.lookback();
  const double n = static_cast<double>(lb.size());
  const double mean = std::accumulate(lb.begin(), lb.end(), 0.0) / n;
  double var = 0.0;
  for (double v : lb) var += (v - mean) * (v - mean);
  const double scale = std::max(std::sqrt(var / n), kMinWindowScale);
  Window out{w.values, w.origin, mean, scale};
  for (double& v : out.values) v = (v - mean) / scale;
  return out;
}

inline Window denormalize(const Window& w) {
  Window out{w.values, w.origin, 0.0, 1.0};
  for (double& v : out.values) v = v * w.scale + w.mean;
  return out;
}

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 0.001;
  std::size_t patience = 5;
  std::size_t stride = 1;
  std::uint64_t seed = 0;

  OptimizerConfig optimizer() const {
    OptimizerConfig o;
    o.learning_rate = learning_rate;
    o.weight_decay = weight_decay;
    return o;
  }

  void validate() const {
    if (epochs == 0 || batch_size == 0 || patience == 0 || stride == 0) {
      throw std::invalid_argument("train.epochs, batch_size, patience and stride must be positive");
    }
    optimizer().validate();
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},         {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},
       {"patience", c.patience},     {"stride", c.stride},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.patience = j.at("patience").get<std::size_t>();
  c.stride = j.at("stride").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t epoch, std::size_t batch, const std::string& what)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch) + ": " + what),
        epoch_(epoch),
        batch_(batch) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  LossBreakdown train;
  double validation = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochRecord> history;  // entry 0 is the untrained model
  std::size_t best_epoch = 0;
  double best_validation = std::numeric_limits<double>::infinity();
};

/// Forward pass plus objective on one window; the window is normalized here.
inline WeightedLoss window_objective(const Model& model, const Window& raw) {
  const Window w = normalize(raw);
  return window_loss(model.forward(w.lookback()), w.target(), model.config());
}

/// Mean objective over windows, without recording a graph.
inline LossBreakdown mean_loss(const Model& model, const std::vector<Window>& windows) {
  NoGradGuard guard;
  LossBreakdown acc;
  for (const auto& w : windows) acc += window_objective(model, w).breakdown;
  if (!windows.empty()) acc /= static_cast<double>(windows.size());
  return acc;
}

/// Mini-batch AdamW on the mean objective over training windows; keeps the
/// parameters with the lowest validation loss seen at any epoch boundary and
/// stops after `patience` epochs without improvement.
inline TrainResult train(std::span<const double> train_series, std::span<const double> val_series,
                         const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                         std::ostream* log = nullptr) {
  model_cfg.validate();
  train_cfg.validate();
  const auto train_windows = make_windows(train_series, model_cfg.window, train_cfg.stride);
  const auto val_windows = make_windows(val_series, model_cfg.window, 1);

  TrainResult result{Model(model_cfg, train_cfg.seed), {}, 0, 0.0};
  Model& model = result.model;
  const OptimizerConfig opt = train_cfg.optimizer();
  std::mt19937_64 shuffle_rng(train_cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  auto emit = [&](const EpochRecord& rec) {
    result.history.push_back(rec);
    if (log) {
      *log << nlohmann::json{{"epoch", rec.epoch}, {"train", rec.train}, {"val_loss", rec.validation}}.dump()
           << '\n';
    }
  };

  // Non-finite loss terms surface as domain_error from total_loss.
  auto guarded = [](std::size_t epoch, std::size_t batch, auto&& fn) {
    try {
      return fn();
    } catch (const std::domain_error& e) {
      throw TrainingDiverged(epoch, batch, e.what());
    }
  };

  EpochRecord initial = guarded(0, 0, [&] {
    return EpochRecord{0, mean_loss(model, train_windows), mean_loss(model, val_windows).total};
  });
  emit(initial);
  result.best_validation = initial.validation;
  auto best = model.params().snapshot();
  std::size_t stale = 0;

  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    LossBreakdown epoch_loss;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += train_cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + train_cfg.batch_size);
      for (std::size_t i = begin; i < end; ++i) {
        const WeightedLoss loss =
            guarded(epoch, batch_index, [&] { return window_objective(model, train_windows[order[i]]); });
        if (!std::isfinite(loss.breakdown.total)) {
          throw TrainingDiverged(epoch, batch_index, "loss is not finite");
        }
        backward(loss.total);
        epoch_loss += loss.breakdown;
      }
      model.params().scale_grad(1.0 / static_cast<double>(end - begin));
      const StepReport step = model.params().step(opt);
      if (!step.applied) throw TrainingDiverged(epoch, batch_index, step.skipped_reason);
    }
    epoch_loss /= static_cast<double>(order.size());

    const double val = guarded(epoch, batch_index, [&] { return mean_loss(model, val_windows).total; });
    if (!std::isfinite(val)) throw TrainingDiverged(epoch, batch_index, "validation loss is not finite");
    emit({epoch, epoch_loss, val});
    if (val < result.best_validation) {
      result.best_validation = val;
      result.best_epoch = epoch;
      best = model.params().snapshot();
      stale = 0;
    } else if (++stale >= train_cfg.patience) {
      break;
    }
  }
  model.params().restore(best);
  return result;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check
// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  double tolerance = 1e-4;
  bool passed() const { return max_relative_error <= tolerance; }
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline double gradient_relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Synthetic trend-plus-noise window used by the gradient check.
inline Window grad_check_window(std::size_t length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  Window w;
  w.values.resize(length + 1);
  for (std::size_t t = 0; t <= length; ++t) {
    const double x = static_cast<double>(t) / static_cast<double>(length);
    w.values[t] = 2.0 * (x - 0.5) * (x - 0.5) + noise(rng);
  }
  return w;
}

/// Central differences of the total objective against reverse-mode gradients
/// for every scalar parameter of a freshly initialized model.
inline GradCheckReport grad_check(const ModelConfig& cfg, std::uint64_t seed = 1, double step = 1e-5,
                                  double tolerance = 1e-4) {
  Model model(cfg, seed);
  const Window window = grad_check_window(cfg.window, seed + 1);

  model.params().zero_grad();
  backward(window_objective(model, window).total);

  GradCheckReport report;
  report.tolerance = tolerance;
  NoGradGuard guard;
  for (std::size_t p = 0; p < model.params().size(); ++p) {
    Tensor& param = model.params().tensor(p);
    const std::vector<double> analytic(param.grad().begin(), param.grad().end());
    auto values = param.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = window_objective(model, window).breakdown.total;
      values[i] = saved - step;
      const double down = window_objective(model, window).breakdown.total;
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      const double err = gradient_relative_error(a, numeric);
      ++report.checked;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = model.params().name(p);
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace dbln
