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


#include "dbln/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

namespace dbln {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("dbln_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
    return dir_ / name;
  }

  nlohmann::json tiny_config(const std::string& out) const {
    return {
        {"dataset",
         {{"source", "synthetic"},
          {"synthetic",
           {{{"id", "toy"}, {"length", 200}, {"noise_std", 0.3}, {"seed", 5},
             {"anomalies", {{{"index", 180}, {"sigmas", 10}}}}}}},
          {"split", {{"train_end", 120}, {"val_end", 160}}}}},
        {"model", {{"window", 10}, {"bandwidths", {4.0}}, {"degree", 1}, {"hidden", 4}}},
        {"train", {{"epochs", 2}, {"batch_size", 16}, {"learning_rate", 0.005}}},
        {"output_dir", (dir_ / out).string()},
        {"seed", 3}};
  }

  fs::path dir_;
};

TEST_F(CliTest, SynthWritesSeriesFiles) {
  const auto spec = write("spec.json", R"({"series": [
      {"id": "trend", "length": 300, "noise_std": 0.5, "seed": 1},
      {"id": "spike", "length": 250, "noise_std": 0.5, "seed": 2,
       "anomalies": [{"index": 100, "sigmas": 10}, {"index": 200, "sigmas": 10}]}]})");
  ASSERT_EQ(cli::cmd_synth(spec, dir_ / "a"), 0);
  const std::string trend = slurp(dir_ / "a" / "trend.csv");
  EXPECT_EQ(count_lines(trend), 301u);
  const LabeledSeries spike = load_series_csv(dir_ / "a" / "spike.csv");
  EXPECT_EQ(std::accumulate(spike.labels.begin(), spike.labels.end(), 0), 2);
  EXPECT_TRUE(fs::exists(dir_ / "a" / "spike.json"));

  ASSERT_EQ(cli::cmd_synth(spec, dir_ / "b"), 0);
  EXPECT_EQ(slurp(dir_ / "a" / "trend.csv"), slurp(dir_ / "b" / "trend.csv"));
  EXPECT_EQ(slurp(dir_ / "a" / "spike.json"), slurp(dir_ / "b" / "spike.json"));
}

TEST_F(CliTest, SynthInvalidSpecIsConfigError) {
  std::ostringstream err;
  const auto spec = write("bad.json", R"({"length": 10, "noise_std": 0.5, "anomalies": [{"index": 50, "magnitude": 1}]})");
  EXPECT_EQ(cli::cmd_synth(spec, dir_ / "out", err), cli::kConfigError);
  EXPECT_NE(err.str().find("anomaly index 50"), std::string::npos) << err.str();
}

TEST_F(CliTest, MissingFieldNamesIt) {
  nlohmann::json j = tiny_config("out");
  j["model"].erase("bandwidths");
  try {
    parse_run_config(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.bandwidths"), std::string::npos) << e.what();
  }
  j = tiny_config("out");
  j.erase("seed");
  EXPECT_THROW(parse_run_config(j), ConfigError);
}

TEST_F(CliTest, BinaryExitsTwoOnMissingField) {
  nlohmann::json j = tiny_config("out");
  j.erase("output_dir");
  const auto cfg = write("cfg.json", j.dump());
  const auto err = dir_ / "stderr.txt";
  const std::string cmd = std::string(DBLN_CLI_PATH) + " train " + cfg.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 2);
  EXPECT_NE(slurp(err).find("output_dir"), std::string::npos);
}

TEST_F(CliTest, BinaryRejectsUnknownFlag) {
  const std::string cmd = std::string(DBLN_CLI_PATH) + " detect --bogus 2> /dev/null";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 2);
}

TEST_F(CliTest, PresetsResolve) {
  nlohmann::json j = tiny_config("out");
  j["model"] = {{"preset", "yahoo"}};
  RunConfig c = parse_run_config(j);
  EXPECT_EQ(c.model.blocks, 8u);
  EXPECT_EQ(c.model.bandwidths, (std::vector<double>{8, 8, 8, 8, 6, 6, 6, 6}));
  EXPECT_EQ(c.model.degree, 1u);
  EXPECT_EQ(c.train.weight_decay, 0.001);
  j["model"] = {{"preset", "kpi"}};
  c = parse_run_config(j);
  EXPECT_EQ(c.model.blocks, 12u);
  EXPECT_EQ(c.model.bandwidths, (std::vector<double>{10, 10, 10, 10, 8, 8, 8, 8, 6, 6, 6, 6}));
}

TEST_F(CliTest, BlockCountMustMatchBandwidths) {
  nlohmann::json j = tiny_config("out");
  j["model"]["blocks"] = 3;
  std::ostringstream err;
  EXPECT_EQ(cli::cmd_train(parse_run_config(j), {}, err), cli::kConfigError);
  EXPECT_NE(err.str().find("bandwidths"), std::string::npos);
}

TEST_F(CliTest, OverridesApply) {
  RunConfig c = parse_run_config(tiny_config("out"));
  cli::Overrides o;
  o.window = 12;
  o.bandwidths = std::vector<double>{5, 3};
  o.kernel = "gaussian";
  o.l2 = 0.01;
  o.lr = 0.02;
  o.epochs = 7;
  o.seed = 99;
  o.no_q_loss = true;
  o.sigma_mult = 3.5;
  o.delay = 2;
  cli::apply(c, o);
  EXPECT_EQ(c.model.window, 12u);
  EXPECT_EQ(c.model.blocks, 2u);
  EXPECT_EQ(c.model.kernel, KernelKind::Gaussian);
  EXPECT_EQ(c.train.weight_decay, 0.01);
  EXPECT_EQ(c.train.learning_rate, 0.02);
  EXPECT_EQ(c.train.epochs, 7u);
  EXPECT_EQ(c.train.seed, 99u);
  EXPECT_EQ(c.model.weights.q, 0.0);
  EXPECT_EQ(c.detector.sigma_multiplier, 3.5);
  EXPECT_EQ(*c.delay, 2u);
  cli::Overrides bad;
  bad.kernel = "box";
  EXPECT_THROW(cli::apply(c, bad), ConfigError);
}

TEST_F(CliTest, TrainDetectEvalPipeline) {
  const RunConfig c = parse_run_config(tiny_config("run"));
  ASSERT_EQ(cli::cmd_train(c, {}), 0);
  const fs::path run = dir_ / "run";
  for (const char* f : {"toy.model.json", "toy.train.jsonl", "toy.whiteness.json", "train_summary.json",
                        "run_config.json"}) {
    EXPECT_TRUE(fs::exists(run / f)) << f;
  }
  EXPECT_EQ(parse_run_config(nlohmann::json::parse(slurp(run / "run_config.json"))).model.window, 10u);
  EXPECT_GE(count_lines(slurp(run / "toy.train.jsonl")), 2u);

  ASSERT_EQ(cli::cmd_synth(write("spec.json", tiny_config("x")["dataset"]["synthetic"].dump()), dir_), 0);
  std::ostringstream a, b;
  ASSERT_EQ(cli::cmd_detect(run / "toy.model.json", dir_ / "toy.csv", 4.0, a), 0);
  ASSERT_EQ(cli::cmd_detect(run / "toy.model.json", dir_ / "toy.csv", 4.0, b), 0);
  EXPECT_EQ(count_lines(a.str()), 200u - 10u);
  EXPECT_EQ(a.str(), b.str());

  // Default threshold when the flag is omitted.
  const auto det = dir_ / "det.jsonl";
  const std::string cmd = std::string(DBLN_CLI_PATH) + " detect --checkpoint " + (run / "toy.model.json").string() +
                          " --series " + (dir_ / "toy.csv").string() + " --out " + det.string();
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_EQ(slurp(det), a.str());

  std::ostringstream report;
  ASSERT_EQ(cli::cmd_eval(det, dir_ / "toy.csv", std::nullopt, 4.0, dir_ / "eval", report), 0);
  const auto j = nlohmann::json::parse(report.str());
  EXPECT_EQ(j.at("k").get<int>(), 3);
  EXPECT_EQ(count_lines(slurp(dir_ / "eval" / "curves.csv")), default_sigma_grid().size() + 1);
}

TEST_F(CliTest, EvalTwoSegmentFixture) {
  const std::vector<int> truth{0, 0, 1, 1, 1, 0, 0, 1, 1, 1};
  const std::vector<int> pred{1, 0, 0, 1, 1, 1, 0, 0, 0, 1};
  LabeledSeries s{"fig", {}, std::vector<double>(10, 0.0), truth, 60};
  for (int t = 0; t < 10; ++t) s.timestamps.push_back(60 * t);
  {
    std::ofstream out(dir_ / "truth.csv");
    write_series_csv(out, s);
    std::ofstream det(dir_ / "det.jsonl");
    for (std::size_t t = 0; t < 10; ++t) {
      det << nlohmann::json(classify(t, pred[t] ? 5.0 : 0.0, 0.0, 1.0, 4.0)).dump() << '\n';
    }
  }
  std::ostringstream out;
  ASSERT_EQ(cli::cmd_eval(dir_ / "det.jsonl", dir_ / "truth.csv", 1, 4.0, std::nullopt, out), 0);
  const auto j = nlohmann::json::parse(out.str());
  EXPECT_EQ(j.at("precision").get<double>(), 0.6);
  EXPECT_EQ(j.at("recall").get<double>(), 0.5);
  EXPECT_NEAR(j.at("f1").get<double>(), 6.0 / 11.0, 1e-15);

  std::ostringstream minutely;
  ASSERT_EQ(cli::cmd_eval(dir_ / "det.jsonl", dir_ / "truth.csv", std::nullopt, 4.0, std::nullopt, minutely), 0);
  EXPECT_EQ(nlohmann::json::parse(minutely.str()).at("k").get<int>(), 7);
}

TEST_F(CliTest, MissingCheckpointIsRuntimeError) {
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_detect(dir_ / "none.json", dir_ / "none.csv", 4.0, out, err), cli::kRuntimeError);
  EXPECT_EQ(cli::cmd_detect(dir_ / "none.json", dir_ / "none.csv", 0.0, out, err), cli::kConfigError);
}

TEST_F(CliTest, GridOfOneMatchesTrain) {
  const RunConfig c = parse_run_config(tiny_config("train"));
  ASSERT_EQ(cli::cmd_train(c, {}), 0);
  nlohmann::json j = tiny_config("grid");
  j["grid"] = {{"bandwidths", {{4.0}}}};
  ASSERT_EQ(cli::cmd_gridsearch(parse_run_config(j), {}), 0);
  EXPECT_EQ(slurp(dir_ / "train" / "toy.model.json"), slurp(dir_ / "grid" / "grid_000" / "toy.model.json"));
  EXPECT_EQ(slurp(dir_ / "train" / "toy.train.jsonl"), slurp(dir_ / "grid" / "grid_000" / "toy.train.jsonl"));
}

TEST_F(CliTest, GridRanksByValidationLoss) {
  nlohmann::json j = tiny_config("grid");
  j["grid"] = {{"bandwidths", {{4.0}, {2.0}}}, {"degree", {0, 1}}};
  cli::Overrides o;
  o.no_q_loss = true;
  ASSERT_EQ(cli::cmd_gridsearch(parse_run_config(j), o), 0);
  const auto ranked = nlohmann::json::parse(slurp(dir_ / "grid" / "gridsearch.json"));
  ASSERT_EQ(ranked.size(), 4u);
  for (std::size_t i = 1; i < ranked.size(); ++i) {
    EXPECT_LE(ranked[i - 1].at("val_loss").get<double>(), ranked[i].at("val_loss").get<double>());
  }
  for (const auto& row : ranked) {
    const auto point = row.at("point").get<int>();
    char name[16];
    std::snprintf(name, sizeof name, "grid_%03d", point);
    const auto summary = nlohmann::json::parse(slurp(dir_ / "grid" / name / "train_summary.json"));
    EXPECT_DOUBLE_EQ(summary[0].at("best_validation").get<double>(), row.at("val_loss").get<double>());
    const auto cfg = nlohmann::json::parse(slurp(dir_ / "grid" / name / "run_config.json"));
    EXPECT_EQ(cfg.at("model").at("loss_weights").at("q").get<double>(), 0.0);
  }
  EXPECT_EQ(count_lines(slurp(dir_ / "grid" / "gridsearch.csv")), 5u);
}

TEST(WorkerPool, ResultsStayOrdered) {
  std::vector<int> out(50);
  cli::parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], static_cast<int>(i * i));
}

TEST(WorkerPool, RethrowsLowestFailingIndex) {
  try {
    cli::parallel_for(20, 3, [](std::size_t i) {
      if (i == 7 || i == 13) throw std::runtime_error("item " + std::to_string(i));
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "item 7");
  }
}

TEST(WorkerPool, ThreadCountFromEnvironment) {
  ::setenv("DBLN_THREADS", "3", 1);
  EXPECT_EQ(cli::worker_threads(), 3u);
  ::setenv("DBLN_THREADS", "zero", 1);
  EXPECT_GE(cli::worker_threads(), 1u);
  ::unsetenv("DBLN_THREADS");
}

TEST(FileStem, ReplacesSeparators) {
  EXPECT_EQ(cli::file_stem("A1Benchmark/real_1"), "A1Benchmark_real_1");
}

}  // namespace
}  // namespace dbln
