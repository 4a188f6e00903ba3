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
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dbln/network.hpp"
#include "dbln/training.hpp"

namespace dbln {

struct DetectorConfig {
  double sigma_multiplier = 4.0;

  void validate() const {
    if (!(sigma_multiplier > 0)) throw std::invalid_argument("detector sigma multiplier must be positive");
  }
};

struct DetectionRecord {
  std::size_t index = 0;
  double observed = 0.0;
  double forecast = 0.0;
  double sigma = 1.0;
  double score = 0.0;  // |y - f| / sigma
  int label = 0;
  double lower = 0.0;
  double upper = 0.0;
  bool warmup = false;
};

inline void to_json(nlohmann::json& j, const DetectionRecord& r) {
  j = {{"index", r.index}, {"y", r.observed}, {"forecast", r.forecast}, {"sigma", r.sigma},
       {"score", r.score}, {"label", r.label},  {"lower", r.lower},       {"upper", r.upper},
       {"warmup", r.warmup}};
}

inline void from_json(const nlohmann::json& j, DetectionRecord& r) {
  r.index = j.at("index").get<std::size_t>();
  r.observed = j.at("y").get<double>();
  r.forecast = j.at("forecast").get<double>();
  r.sigma = j.at("sigma").get<double>();
  r.score = j.at("score").get<double>();
  r.label = j.at("label").get<int>();
  r.lower = j.at("lower").get<double>();
  r.upper = j.at("upper").get<double>();
  r.warmup = j.value("warmup", false);
}

/// Applies the n-sigma rule to an already computed forecast. Exceedance is strict.
inline DetectionRecord classify(std::size_t index, double observed, double forecast, double sigma,
                                double n) {
  DetectionRecord r;
  r.index = index;
  r.observed = observed;
  r.forecast = forecast;
  r.sigma = sigma;
  const double dev = std::abs(observed - forecast);
  r.score = dev / sigma;
  r.label = dev > n * sigma ? 1 : 0;
  r.lower = forecast - n * sigma;
  r.upper = forecast + n * sigma;
  return r;
}

/// Forecasts the point after `lookback` and scores `observed` against it.
inline DetectionRecord detect_point(std::span<const double> lookback, double observed,
                                    const Model& model, const DetectorConfig& cfg,
                                    std::size_t index = 0) {
  Window raw;
  raw.values.assign(lookback.begin(), lookback.end());
  raw.values.push_back(observed);
  // Target is excluded from the statistics, so the forecast never sees it.
  const Window w = normalize(raw);
  NoGradGuard guard;
  const StackOutput out = model.forward(w.lookback());
  const double forecast = out.forecast.item() * w.scale + w.mean;
  const double sigma = out.sigma.item() * w.scale;
  return classify(index, observed, forecast, sigma, cfg.sigma_multiplier);
}

/// One record per point; the first T points are warm-up (label 0). Point t
/// is scored using only values before t.
inline std::vector<DetectionRecord> stream_detect(std::span<const double> series, const Model& model,
                                                  const DetectorConfig& cfg) {
  cfg.validate();
  const std::size_t length = model.config().window;
  if (series.size() < length + 1) {
    throw std::invalid_argument("stream_detect needs at least T + 1 = " + std::to_string(length + 1) +
                                " points, got " + std::to_string(series.size()));
  }
  std::vector<DetectionRecord> records;
  records.reserve(series.size());
  for (std::size_t t = 0; t < length; ++t) {
    DetectionRecord r;
    r.index = t;
    r.observed = series[t];
    r.forecast = series[t];
    r.sigma = 0.0;
    r.lower = r.upper = series[t];
    r.warmup = true;
    records.push_back(r);
  }
  for (std::size_t t = length; t < series.size(); ++t) {
    records.push_back(detect_point(series.subspan(t - length, length), series[t], model, cfg, t));
  }
  return records;
}

/// Rolling mean +- n std over the previous `length` raw points, used as a
/// reference detector. Same record layout and warm-up as stream_detect.
inline std::vector<DetectionRecord> rolling_detect(std::span<const double> series, std::size_t length,
                                                   double n = 3.0) {
  if (length < 2) throw std::invalid_argument("rolling_detect needs a window of at least 2");
  std::vector<DetectionRecord> records;
  records.reserve(series.size());
  for (std::size_t t = 0; t < series.size(); ++t) {
    if (t < length) {
      DetectionRecord r;
      r.index = t;
      r.observed = r.forecast = r.lower = r.upper = series[t];
      r.sigma = 0.0;
      r.warmup = true;
      records.push_back(r);
      continue;
    }
    Window raw;
    raw.values.assign(series.begin() + static_cast<std::ptrdiff_t>(t - length),
                      series.begin() + static_cast<std::ptrdiff_t>(t + 1));
    const Window w = normalize(raw);
    records.push_back(classify(t, series[t], w.mean, w.scale, n));
  }
  return records;
}

/// JSON lines, one record per line; warm-up records are omitted unless asked for.
inline void write_detections(std::ostream& out, const std::vector<DetectionRecord>& records,
                             bool include_warmup = false) {
  for (const auto& r : records) {
    if (r.warmup && !include_warmup) continue;
    out << nlohmann::json(r).dump() << '\n';
  }
}

}  // namespace dbln
