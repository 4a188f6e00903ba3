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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dbln/data.hpp"
#include "dbln/detector.hpp"
#include "dbln/network.hpp"
#include "dbln/training.hpp"

namespace dbln {

/// Invalid or incomplete experiment description (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  std::string source = "synthetic";  // synthetic | csv | yahoo | kpi
  std::string path;                  // csv file or yahoo directory
  std::string train_path;            // kpi
  std::string test_path;             // kpi
  std::vector<SyntheticSpec> synthetic;
  std::string scheme;                // yahoo | kpi | explicit
  std::size_t train_end = 0;         // explicit scheme
  std::size_t val_end = 0;
  std::size_t limit = 0;             // 0 keeps every series
  nlohmann::json raw;
};

/// Parameter grid for the hyper-parameter search. Empty lists keep the base value.
struct GridConfig {
  std::vector<std::vector<double>> bandwidths;
  std::vector<std::size_t> degree;
  std::vector<double> l2;
  std::vector<std::size_t> hidden;
  std::vector<std::string> kernel;
};

struct RunConfig {
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train;
  DetectorConfig detector;
  std::optional<std::size_t> delay;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  GridConfig grid;

  void validate() const {
    try {
      model.validate();
      train.validate();
      detector.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    const auto& s = dataset.source;
    if (s != "synthetic" && s != "csv" && s != "yahoo" && s != "kpi") {
      throw ConfigError("dataset.source must be synthetic|csv|yahoo|kpi, got '" + s + "'");
    }
    if (s == "synthetic" && dataset.synthetic.empty()) throw ConfigError("missing field: dataset.synthetic");
    if ((s == "csv" || s == "yahoo") && dataset.path.empty()) throw ConfigError("missing field: dataset.path");
    if (s == "kpi" && (dataset.train_path.empty() || dataset.test_path.empty())) {
      throw ConfigError("missing field: dataset.train_path / dataset.test_path");
    }
    if (dataset.scheme == "explicit" && !(dataset.train_end > 0 && dataset.train_end < dataset.val_end)) {
      throw ConfigError("dataset.split needs 0 < train_end < val_end");
    }
    for (const auto& spec : dataset.synthetic) {
      try {
        spec.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("dataset.synthetic: ") + e.what());
      }
    }
  }
};

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError("missing field: " + path + key);
  return j.at(key);
}

template <class T>
T get_as(const nlohmann::json& j, const std::string& key, const std::string& path) {
  try {
    return require(j, key, path).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("invalid value for field: " + path + key);
  }
}

template <class T>
void maybe(const nlohmann::json& j, const std::string& key, const std::string& path, T& out) {
  if (j.is_object() && j.contains(key)) out = get_as<T>(j, key, path);
}

inline ModelConfig parse_model(const nlohmann::json& j) {
  ModelConfig m;
  const std::string preset = j.value("preset", "");
  if (preset == "yahoo") {
    m = ModelConfig::yahoo();
  } else if (preset == "kpi") {
    m = ModelConfig::kpi();
  } else if (!preset.empty()) {
    throw ConfigError("model.preset must be yahoo|kpi, got '" + preset + "'");
  } else {
    m.window = get_as<std::size_t>(j, "window", "model.");
    m.bandwidths = get_as<std::vector<double>>(j, "bandwidths", "model.");
    m.degree = get_as<std::size_t>(j, "degree", "model.");
    m.blocks = m.bandwidths.size();
  }
  maybe(j, "window", "model.", m.window);
  maybe(j, "bandwidths", "model.", m.bandwidths);
  m.blocks = m.bandwidths.size();
  maybe(j, "blocks", "model.", m.blocks);
  maybe(j, "degree", "model.", m.degree);
  maybe(j, "hidden", "model.", m.hidden);
  maybe(j, "max_lag", "model.", m.max_lag);
  maybe(j, "sigma_floor", "model.", m.sigma_floor);
  if (j.contains("kernel")) {
    try {
      m.kernel = parse_kernel(get_as<std::string>(j, "kernel", "model."));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("model.kernel: ") + e.what());
    }
  }
  if (j.contains("loss_weights")) {
    const auto& w = j.at("loss_weights");
    maybe(w, "alpha", "model.loss_weights.", m.weights.alpha);
    maybe(w, "beta", "model.loss_weights.", m.weights.beta);
    maybe(w, "gamma", "model.loss_weights.", m.weights.gamma);
    maybe(w, "q", "model.loss_weights.", m.weights.q);
    maybe(w, "gaussian", "model.loss_weights.", m.weights.gaussian);
  }
  return m;
}

inline TrainConfig parse_train(const nlohmann::json& j) {
  TrainConfig t;
  maybe(j, "epochs", "train.", t.epochs);
  maybe(j, "batch_size", "train.", t.batch_size);
  maybe(j, "learning_rate", "train.", t.learning_rate);
  maybe(j, "weight_decay", "train.", t.weight_decay);
  maybe(j, "patience", "train.", t.patience);
  maybe(j, "stride", "train.", t.stride);
  return t;
}

inline DatasetConfig parse_dataset(const nlohmann::json& j) {
  DatasetConfig d;
  d.raw = j;
  d.source = get_as<std::string>(j, "source", "dataset.");
  maybe(j, "path", "dataset.", d.path);
  maybe(j, "train_path", "dataset.", d.train_path);
  maybe(j, "test_path", "dataset.", d.test_path);
  maybe(j, "limit", "dataset.", d.limit);
  if (j.contains("synthetic")) {
    const auto& s = j.at("synthetic");
    try {
      if (s.is_array()) {
        for (const auto& e : s) d.synthetic.push_back(e.get<SyntheticSpec>());
      } else {
        d.synthetic.push_back(s.get<SyntheticSpec>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("dataset.synthetic: ") + e.what());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("dataset.synthetic: ") + e.what());
    }
  }
  if (d.source == "yahoo") d.scheme = "yahoo";
  if (d.source == "kpi") d.scheme = "kpi";
  maybe(j, "scheme", "dataset.", d.scheme);
  if (j.contains("split")) {
    d.scheme = "explicit";
    d.train_end = get_as<std::size_t>(j.at("split"), "train_end", "dataset.split.");
    d.val_end = get_as<std::size_t>(j.at("split"), "val_end", "dataset.split.");
  }
  if (d.scheme.empty()) throw ConfigError("missing field: dataset.split (or dataset.scheme)");
  if (d.scheme != "yahoo" && d.scheme != "kpi" && d.scheme != "explicit") {
    throw ConfigError("dataset.scheme must be yahoo|kpi, got '" + d.scheme + "'");
  }
  return d;
}

inline GridConfig parse_grid(const nlohmann::json& j) {
  GridConfig g;
  maybe(j, "bandwidths", "grid.", g.bandwidths);
  maybe(j, "degree", "grid.", g.degree);
  maybe(j, "l2", "grid.", g.l2);
  maybe(j, "hidden", "grid.", g.hidden);
  maybe(j, "kernel", "grid.", g.kernel);
  return g;
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run configuration must be a JSON object");
  RunConfig c;
  c.dataset = detail::parse_dataset(detail::require(j, "dataset", ""));
  c.model = detail::parse_model(detail::require(j, "model", ""));
  if (j.contains("train")) c.train = detail::parse_train(j.at("train"));
  if (j.contains("detector")) detail::maybe(j.at("detector"), "sigma_multiplier", "detector.", c.detector.sigma_multiplier);
  if (j.contains("eval") && j.at("eval").contains("delay")) {
    c.delay = detail::get_as<std::size_t>(j.at("eval"), "delay", "eval.");
  }
  c.output_dir = detail::get_as<std::string>(j, "output_dir", "");
  c.seed = detail::get_as<std::uint64_t>(j, "seed", "");
  c.train.seed = c.seed;
  if (j.contains("grid")) c.grid = detail::parse_grid(j.at("grid"));
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

/// Fully resolved configuration, as written next to run outputs.
inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json dataset = c.dataset.raw;
  if (!dataset.is_object()) dataset = nlohmann::json::object();
  dataset["source"] = c.dataset.source;
  dataset["scheme"] = c.dataset.scheme;
  nlohmann::json j = {{"dataset", dataset},
                      {"model", c.model},
                      {"train", c.train},
                      {"detector", {{"sigma_multiplier", c.detector.sigma_multiplier}}},
                      {"output_dir", c.output_dir},
                      {"seed", c.seed}};
  if (c.delay) j["eval"] = {{"delay", *c.delay}};
  return j;
}

}  // namespace dbln
