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
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "dbln/diffcore.hpp"

namespace dbln {

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be positive");
    if (!(weight_decay >= 0)) throw std::invalid_argument("weight_decay must be non-negative");
    if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) {
      throw std::invalid_argument("moment decay rates must lie in (0,1)");
    }
    if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
  }
};

struct StepReport {
  bool applied = true;
  std::string skipped_reason;  // names the first non-finite parameter gradient
};

/// Named trainable tensors plus AdamW state. Copying deep-copies values and
/// moments; the copy owns fresh leaf tensors.
class ParamStore {
 public:
  static constexpr int kCheckpointVersion = 1;

  ParamStore() = default;
  ParamStore(const ParamStore& other) { copy_from(other); }
  ParamStore& operator=(const ParamStore& other) {
    if (this != &other) copy_from(other);
    return *this;
  }
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  Tensor& add(const std::string& name, Shape shape, std::vector<double> values) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_.emplace(name, entries_.size());
    const std::size_t n = values.size();
    entries_.push_back(Entry{name, Tensor::from(std::move(shape), std::move(values), true),
                             std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
    return entries_.back().tensor;
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  Tensor& get(const std::string& name) { return entries_.at(lookup(name)).tensor; }
  const Tensor& get(const std::string& name) const { return entries_.at(lookup(name)).tensor; }

  std::size_t size() const { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].name; }
  Tensor& tensor(std::size_t i) { return entries_[i].tensor; }
  const Tensor& tensor(std::size_t i) const { return entries_[i].tensor; }
  std::uint64_t step_count() const { return steps_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  /// Multiplies every accumulated gradient by `factor`.
  void scale_grad(double factor) {
    for (auto& e : entries_) {
      if (!e.tensor.has_grad()) continue;
      for (double& g : e.tensor.mutable_grad()) g *= factor;
    }
  }

  /// One AdamW update with decoupled weight decay, then clears gradients.
  /// Non-finite gradients skip the update entirely (the counter is untouched).
  StepReport step(const OptimizerConfig& cfg) {
    for (auto& e : entries_) {
      if (!e.tensor.has_grad()) continue;
      for (double g : e.tensor.grad()) {
        if (!std::isfinite(g)) {
          zero_grad();
          return {false, "non-finite gradient in " + e.name};
        }
      }
    }
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& e : entries_) {
      auto p = e.tensor.mutable_values();
      const bool has_grad = e.tensor.has_grad();
      const auto g = e.tensor.grad();
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = has_grad ? g[i] : 0.0;
        e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * gi;
        e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * gi * gi;
        const double mhat = e.m[i] / bc1;
        const double vhat = e.v[i] / bc2;
        p[i] -= cfg.learning_rate * cfg.weight_decay * p[i];
        p[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
      }
    }
    zero_grad();
    return {};
  }

  /// Parameter values only, in registration order.
  std::vector<std::vector<double>> snapshot() const {
    std::vector<std::vector<double>> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.emplace_back(e.tensor.values().begin(), e.tensor.values().end());
    return out;
  }

  void restore(const std::vector<std::vector<double>>& values) {
    if (values.size() != entries_.size()) throw std::invalid_argument("snapshot size mismatch");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      auto dst = entries_[i].tensor.mutable_values();
      if (values[i].size() != dst.size()) {
        throw std::invalid_argument("snapshot shape mismatch for " + entries_[i].name);
      }
      std::copy(values[i].begin(), values[i].end(), dst.begin());
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& e : entries_) {
      params.push_back({{"name", e.name},
                        {"shape", e.tensor.shape()},
                        {"values", std::vector<double>(e.tensor.values().begin(),
                                                       e.tensor.values().end())}});
    }
    return {{"format", "dbln.params"},
            {"version", kCheckpointVersion},
            {"step", steps_},
            {"params", std::move(params)}};
  }

  static ParamStore from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "dbln.params") throw std::runtime_error("not a dbln parameter file");
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw std::runtime_error("unsupported parameter file version " + j.at("version").dump());
    }
    ParamStore store;
    for (const auto& p : j.at("params")) {
      store.add(p.at("name").get<std::string>(), p.at("shape").get<Shape>(),
                p.at("values").get<std::vector<double>>());
    }
    store.steps_ = j.value("step", std::uint64_t{0});
    return store;
  }

 private:
  struct Entry {
    std::string name;
    Tensor tensor;
    std::vector<double> m;
    std::vector<double> v;
  };

  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
  }

  void copy_from(const ParamStore& other) {
    entries_.clear();
    index_ = other.index_;
    steps_ = other.steps_;
    for (const auto& e : other.entries_) {
      entries_.push_back(Entry{
          e.name,
          Tensor::from(e.tensor.shape(), {e.tensor.values().begin(), e.tensor.values().end()}, true),
          e.m, e.v});
    }
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t steps_ = 0;
};

}  // namespace dbln
