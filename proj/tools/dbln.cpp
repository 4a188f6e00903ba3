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


#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dbln/cli.hpp"

namespace {

using dbln::cli::Overrides;

void add_overrides(CLI::App* app, Overrides& o) {
  auto opt = [app](const std::string& name, auto& field, const std::string& help) {
    return app->add_option_function<typename std::decay_t<decltype(field)>::value_type>(
        name, [&field](const auto& v) { field = v; }, help);
  };
  opt("--window", o.window, "look-back length T");
  opt("--blocks", o.blocks, "number of stacked blocks");
  opt("--bandwidths", o.bandwidths, "kernel bandwidth per block")->delimiter(',');
  opt("--degree", o.degree, "local polynomial degree");
  opt("--kernel", o.kernel, "gaussian or tricube");
  opt("--sigma-mult", o.sigma_mult, "detection threshold n");
  opt("--delay", o.delay, "allowed detection delay k");
  opt("--l2", o.l2, "weight decay");
  opt("--lr", o.lr, "learning rate");
  opt("--epochs", o.epochs, "maximum epochs");
  opt("--seed", o.seed, "random seed");
  opt("--out", o.out, "output directory");
  app->add_flag("--no-q-loss", o.no_q_loss, "drop the whiteness loss term");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming anomaly detection with deep local-regression baselines"};
  app.require_subcommand(1);

  std::string spec, out_dir;
  auto* synth = app.add_subcommand("synth", "generate synthetic labeled series");
  synth->add_option("--spec", spec, "series spec (JSON)")->required();
  synth->add_option("--out", out_dir, "output directory")->required();

  std::string config;
  Overrides train_over;
  auto* train = app.add_subcommand("train", "train one model per series");
  train->add_option("config", config, "run configuration (JSON)")->required();
  add_overrides(train, train_over);

  std::string checkpoint, series, detections_out;
  double sigma_mult = 4.0;
  auto* detect = app.add_subcommand("detect", "stream a series through a trained model");
  detect->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  detect->add_option("--series", series, "series CSV")->required();
  detect->add_option("--sigma-mult", sigma_mult, "threshold n")->capture_default_str();
  detect->add_option("--out", detections_out, "detections JSONL (default stdout)");

  std::string detections, truth, eval_out;
  std::optional<std::size_t> delay;
  double eval_n = 4.0;
  auto* eval = app.add_subcommand("eval", "score detections against labels");
  eval->add_option("--detections", detections, "detections JSONL")->required();
  eval->add_option("--truth", truth, "labeled series CSV")->required();
  eval->add_option("--delay", delay, "allowed delay k (default from sampling interval)");
  eval->add_option("--sigma-mult", eval_n, "threshold n for the headline report")->capture_default_str();
  eval->add_option("--out", eval_out, "directory for report and curves");

  std::string grid_config;
  Overrides grid_over;
  auto* grid = app.add_subcommand("gridsearch", "rank hyper-parameter combinations by validation loss");
  grid->add_option("config", grid_config, "run configuration with a grid section (JSON)")->required();
  add_overrides(grid, grid_over);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dbln::cli::kConfigError;
  }

  if (*synth) return dbln::cli::cmd_synth(spec, out_dir);
  if (*train) return dbln::cli::cmd_train(config, train_over);
  if (*detect) {
    if (detections_out.empty()) return dbln::cli::cmd_detect(checkpoint, series, sigma_mult, std::cout);
    std::ofstream out(detections_out);
    if (!out) {
      std::cerr << "error: cannot write " << detections_out << '\n';
      return dbln::cli::kRuntimeError;
    }
    return dbln::cli::cmd_detect(checkpoint, series, sigma_mult, out);
  }
  if (*eval) {
    std::optional<std::filesystem::path> dir;
    if (!eval_out.empty()) dir = eval_out;
    return dbln::cli::cmd_eval(detections, truth, delay, eval_n, dir, std::cout);
  }
  return dbln::cli::cmd_gridsearch(grid_config, grid_over);
}
