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

// Command implementations behind the `dbln` executable. Each command returns
// a process exit code: 0 success, 1 runtime failure, 2 configuration error.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "dbln/data.hpp"
#include "dbln/detector.hpp"
#include "dbln/evaluation.hpp"
#include "dbln/losses.hpp"
#include "dbln/run_config.hpp"
#include "dbln/training.hpp"

namespace dbln::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kRuntimeError = 1, kConfigError = 2 };

/// Worker count from DBLN_THREADS, else the hardware concurrency.
inline std::size_t worker_threads() {
  if (const char* env = std::getenv("DBLN_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n > 0) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on a bounded pool. The exception of the lowest
/// failing index is rethrown after all workers finish.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t count = std::min(threads, n);
  if (count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Flag values that override the configuration file.
struct Overrides {
  std::optional<std::size_t> window;
  std::optional<std::size_t> blocks;
  std::optional<std::vector<double>> bandwidths;
  std::optional<std::size_t> degree;
  std::optional<std::string> kernel;
  std::optional<double> sigma_mult;
  std::optional<std::size_t> delay;
  std::optional<double> l2;
  std::optional<double> lr;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  bool no_q_loss = false;
  std::optional<std::string> out;
};

inline void apply(RunConfig& c, const Overrides& o) {
  if (o.window) c.model.window = *o.window;
  if (o.bandwidths) {
    c.model.bandwidths = *o.bandwidths;
    c.model.blocks = o.bandwidths->size();
  }
  if (o.blocks) c.model.blocks = *o.blocks;
  if (o.degree) c.model.degree = *o.degree;
  if (o.kernel) {
    try {
      c.model.kernel = parse_kernel(*o.kernel);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (o.sigma_mult) c.detector.sigma_multiplier = *o.sigma_mult;
  if (o.delay) c.delay = *o.delay;
  if (o.l2) c.train.weight_decay = *o.l2;
  if (o.lr) c.train.learning_rate = *o.lr;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.seed) {
    c.seed = *o.seed;
    c.train.seed = *o.seed;
  }
  if (o.no_q_loss) c.model.weights.q = 0.0;
  if (o.out) c.output_dir = *o.out;
}

/// Series identifiers can contain path separators (Yahoo sub-folders).
inline std::string file_stem(const std::string& id) {
  std::string s = id;
  for (char& ch : s) {
    if (ch == '/' || ch == '\\' || ch == ' ' || ch == ':') ch = '_';
  }
  return s;
}

struct SeriesTask {
  LabeledSeries series;
  SplitRanges ranges;
  std::optional<LabeledSeries> test_series;  // separate test curve (KPI)
};

inline SplitRanges split_for(const RunConfig& c, std::size_t n) {
  try {
    if (c.dataset.scheme == "yahoo") return split(n, SplitScheme::Yahoo);
    if (c.dataset.scheme == "kpi") return split(n, SplitScheme::Kpi);
    return split_at(n, c.dataset.train_end, c.dataset.val_end);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(e.what());
  }
}

inline std::vector<SeriesTask> load_tasks(const RunConfig& c, std::ostream& err) {
  std::vector<LabeledSeries> all;
  std::vector<LabeledSeries> tests;
  const auto& d = c.dataset;
  if (d.source == "synthetic") {
    for (const auto& spec : d.synthetic) all.push_back(generate_series(spec));
  } else if (d.source == "csv") {
    all.push_back(load_series_csv(d.path));
  } else if (d.source == "yahoo") {
    auto loaded = load_yahoo(d.path);
    for (const auto& w : loaded.warnings) err << "warning: " << w << '\n';
    all = std::move(loaded.series);
  } else {
    std::tie(all, tests) = load_kpi(d.train_path, d.test_path);
  }
  if (d.limit > 0 && all.size() > d.limit) all.resize(d.limit);

  std::vector<SeriesTask> tasks;
  for (auto& s : all) {
    SeriesTask t{s, split_for(c, s.size()), std::nullopt};
    for (const auto& ts : tests) {
      if (ts.id == s.id) t.test_series = ts;
    }
    tasks.push_back(std::move(t));
  }
  return tasks;
}

struct SeriesTrainOutcome {
  std::string id;
  std::size_t best_epoch = 0;
  double best_validation = 0.0;
  WhitenessReport whiteness;
};

inline void write_json_file(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

/// Trains one series, writing <stem>.model.json, <stem>.train.jsonl and
/// <stem>.whiteness.json (Ljung-Box on one-step residuals over the validation range).
inline SeriesTrainOutcome train_series(const SeriesTask& task, const RunConfig& c, const fs::path& dir) {
  const std::string stem = file_stem(task.series.id);
  const std::span<const double> values(task.series.values);
  const auto train_span = values.subspan(task.ranges.train.begin, task.ranges.train.size());
  const auto val_span = with_context(values, task.ranges.validation, c.model.window);

  std::ofstream log(dir / (stem + ".train.jsonl"));
  if (!log) throw std::runtime_error("cannot write training log for " + task.series.id);
  TrainResult result = train(train_span, val_span, c.model, c.train, &log);
  result.model.save((dir / (stem + ".model.json")).string());

  std::vector<double> residuals;
  for (const auto& r : stream_detect(val_span, result.model, c.detector)) {
    if (!r.warmup) residuals.push_back(r.observed - r.forecast);
  }
  SeriesTrainOutcome out{task.series.id, result.best_epoch, result.best_validation, {}};
  const std::size_t lag = residuals.size() < 2 ? 0 : std::min(c.model.effective_max_lag(), residuals.size() - 1);
  if (lag >= 1) {
    out.whiteness = ljung_box(residuals, lag);
    write_json_file(dir / (stem + ".whiteness.json"), out.whiteness);
  }
  return out;
}

inline std::vector<SeriesTrainOutcome> train_all(const RunConfig& c, const std::vector<SeriesTask>& tasks,
                                                 const fs::path& dir) {
  fs::create_directories(dir);
  write_json_file(dir / "run_config.json", to_json(c));
  std::vector<SeriesTrainOutcome> outcomes(tasks.size());
  parallel_for(tasks.size(), worker_threads(),
               [&](std::size_t i) { outcomes[i] = train_series(tasks[i], c, dir); });
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& o : outcomes) {
    summary.push_back({{"id", o.id}, {"best_epoch", o.best_epoch}, {"best_validation", o.best_validation},
                       {"whiteness", o.whiteness}});
  }
  write_json_file(dir / "train_summary.json", summary);
  return outcomes;
}

/// Maps exceptions onto exit codes and prints a one-line diagnostic.
template <class F>
int guarded(std::ostream& err, F&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const TrainingDiverged& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// Writes <id>.csv and <id>.json for every spec in the file (an object, an
/// array, or {"series": [...]}).
inline int cmd_synth(const fs::path& spec_file, const fs::path& out_dir, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    std::vector<SyntheticSpec> specs;
    try {
      std::ifstream in(spec_file);
      if (!in) throw ConfigError("cannot read spec " + spec_file.string());
      const auto j = nlohmann::json::parse(in);
      const auto& list = j.is_object() && j.contains("series") ? j.at("series") : j;
      if (list.is_array()) {
        for (const auto& e : list) specs.push_back(e.get<SyntheticSpec>());
      } else {
        specs.push_back(list.get<SyntheticSpec>());
      }
      for (const auto& s : specs) s.validate();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(spec_file.string() + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(spec_file.string() + ": " + e.what());
    }
    fs::create_directories(out_dir);
    for (const auto& spec : specs) {
      const LabeledSeries s = generate_series(spec);
      std::ofstream csv(out_dir / (file_stem(s.id) + ".csv"));
      write_series_csv(csv, s);
      write_json_file(out_dir / (file_stem(s.id) + ".json"), s);
    }
    return kOk;
  });
}

inline int cmd_train(RunConfig c, const Overrides& o, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    apply(c, o);
    c.validate();
    const auto tasks = load_tasks(c, err);
    train_all(c, tasks, c.output_dir);
    return kOk;
  });
}

inline int cmd_train(const fs::path& config, const Overrides& o, std::ostream& err = std::cerr) {
  return guarded(err, [&] { return cmd_train(load_run_config(config), o, err); });
}

/// Streams the series through a checkpoint; one JSON line per non-warm-up point.
inline int cmd_detect(const fs::path& checkpoint, const fs::path& series_csv, double sigma_mult,
                      std::ostream& out, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    DetectorConfig cfg{sigma_mult};
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    const Model model = Model::load(checkpoint.string());
    const LabeledSeries series = load_series_csv(series_csv);
    write_detections(out, stream_detect(series.values, model, cfg));
    return kOk;
  });
}

inline std::vector<DetectionRecord> read_detections(std::istream& in) {
  std::vector<DetectionRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    records.push_back(nlohmann::json::parse(line).get<DetectionRecord>());
  }
  return records;
}

struct EvalOutput {
  EvalReport report;
  Curve curve;
};

/// Scores detections against the truth labels of the same series. Only the
/// detected (non-warm-up) indices take part.
inline EvalOutput evaluate_detections(const std::vector<DetectionRecord>& records, const LabeledSeries& truth,
                                      std::size_t delay, double sigma_mult, std::span<const double> n_grid) {
  if (!truth.labeled()) throw std::runtime_error(truth.id + " has no label column");
  std::vector<int> labels;
  std::vector<double> scores;
  for (const auto& r : records) {
    if (r.warmup) continue;
    if (r.index >= truth.size()) {
      throw std::runtime_error("detection index " + std::to_string(r.index) + " beyond truth series");
    }
    labels.push_back(truth.labels[r.index]);
    scores.push_back(r.score);
  }
  return {evaluate(labels, scores, delay, sigma_mult), sweep_curves(labels, scores, delay, n_grid)};
}

inline int cmd_eval(const fs::path& detections, const fs::path& truth_csv, std::optional<std::size_t> delay,
                    double sigma_mult, const std::optional<fs::path>& out_dir, std::ostream& out,
                    std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    std::ifstream in(detections);
    if (!in) throw std::runtime_error("cannot read " + detections.string());
    const auto records = read_detections(in);
    const LabeledSeries truth = load_series_csv(truth_csv);
    const std::size_t k = delay.value_or(default_delay(truth.interval));
    const auto grid = default_sigma_grid();
    const EvalOutput result = evaluate_detections(records, truth, k, sigma_mult, grid);
    const nlohmann::json report = {{"report", result.report}, {"curve", curve_json(result.curve)}};
    if (out_dir) {
      fs::create_directories(*out_dir);
      write_json_file(*out_dir / "eval_report.json", report);
      std::ofstream csv(*out_dir / "curves.csv");
      write_curve_csv(csv, result.curve);
    }
    out << nlohmann::json(result.report).dump() << '\n';
    return kOk;
  });
}

struct GridPoint {
  std::vector<double> bandwidths;
  std::size_t degree = 1;
  double l2 = 0.0;
  std::size_t hidden = 0;
  std::string kernel;
};

inline std::vector<GridPoint> expand_grid(const RunConfig& c) {
  const auto& g = c.grid;
  auto bws = g.bandwidths.empty() ? std::vector<std::vector<double>>{c.model.bandwidths} : g.bandwidths;
  auto degrees = g.degree.empty() ? std::vector<std::size_t>{c.model.degree} : g.degree;
  auto l2s = g.l2.empty() ? std::vector<double>{c.train.weight_decay} : g.l2;
  auto hiddens = g.hidden.empty() ? std::vector<std::size_t>{c.model.hidden} : g.hidden;
  auto kernels = g.kernel.empty() ? std::vector<std::string>{std::string(to_string(c.model.kernel))} : g.kernel;
  std::vector<GridPoint> points;
  for (const auto& bw : bws)
    for (auto d : degrees)
      for (auto l2 : l2s)
        for (auto h : hiddens)
          for (const auto& k : kernels) points.push_back({bw, d, l2, h, k});
  return points;
}

/// Trains every grid point on every series and ranks points by mean best
/// validation loss, ascending. Point i writes its run under <out>/grid_<i>.
inline int cmd_gridsearch(RunConfig c, const Overrides& o, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    apply(c, o);
    c.validate();
    const auto points = expand_grid(c);
    const auto tasks = load_tasks(c, err);
    struct Row {
      std::size_t id;
      GridPoint point;
      double validation;
    };
    std::vector<Row> rows;
    for (std::size_t i = 0; i < points.size(); ++i) {
      RunConfig rc = c;
      rc.model.bandwidths = points[i].bandwidths;
      rc.model.blocks = points[i].bandwidths.size();
      rc.model.degree = points[i].degree;
      rc.model.hidden = points[i].hidden;
      try {
        rc.model.kernel = parse_kernel(points[i].kernel);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      rc.train.weight_decay = points[i].l2;
      std::ostringstream name;
      name << "grid_" << std::setw(3) << std::setfill('0') << i;
      rc.output_dir = (fs::path(c.output_dir) / name.str()).string();
      rc.grid = {};
      rc.validate();
      const auto outcomes = train_all(rc, tasks, rc.output_dir);
      double total = 0.0;
      for (const auto& oc : outcomes) total += oc.best_validation;
      rows.push_back({i, points[i], outcomes.empty() ? 0.0 : total / static_cast<double>(outcomes.size())});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.validation < b.validation; });

    fs::create_directories(c.output_dir);
    std::ofstream csv(fs::path(c.output_dir) / "gridsearch.csv");
    csv << "rank,point,blocks,bandwidths,degree,l2,hidden,kernel,val_loss\n" << std::setprecision(17);
    nlohmann::json ranked = nlohmann::json::array();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& p = rows[r].point;
      std::string bw;
      for (double h : p.bandwidths) bw += (bw.empty() ? "" : " ") + nlohmann::json(h).dump();
      csv << r + 1 << ',' << rows[r].id << ',' << p.bandwidths.size() << ',' << bw << ',' << p.degree << ','
          << p.l2 << ',' << p.hidden << ',' << p.kernel << ',' << rows[r].validation << '\n';
      ranked.push_back({{"rank", r + 1}, {"point", rows[r].id}, {"bandwidths", p.bandwidths},
                        {"degree", p.degree}, {"l2", p.l2}, {"hidden", p.hidden}, {"kernel", p.kernel},
                        {"val_loss", rows[r].validation}});
    }
    write_json_file(fs::path(c.output_dir) / "gridsearch.json", ranked);
    return kOk;
  });
}

inline int cmd_gridsearch(const fs::path& config, const Overrides& o, std::ostream& err = std::cerr) {
  return guarded(err, [&] { return cmd_gridsearch(load_run_config(config), o, err); });
}

}  // namespace dbln::cli
