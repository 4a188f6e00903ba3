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


#include "dbln/detector.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

namespace dbln {
namespace {

Model small_model(std::uint64_t seed = 1) {
  ModelConfig c;
  c.window = 12;
  c.blocks = 2;
  c.bandwidths = {5.0, 3.0};
  c.hidden = 4;
  return Model(c, seed);
}

std::vector<double> noisy_line(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  std::vector<double> v(n);
  for (std::size_t t = 0; t < n; ++t) v[t] = 0.05 * static_cast<double>(t) + noise(rng);
  return v;
}

TEST(Classify, StrictExceedance) {
  EXPECT_EQ(classify(0, 4.5, 0.0, 1.0, 4.0).label, 1);
  EXPECT_EQ(classify(0, 4.0, 0.0, 1.0, 4.0).label, 0);
  EXPECT_EQ(classify(0, -6.0, -2.0, 0.5, 8.0).label, 0);
  const DetectionRecord r = classify(3, 2.0, 2.0, 0.7, 1e-6);
  EXPECT_EQ(r.score, 0.0);
  EXPECT_EQ(r.label, 0);
}

TEST(Classify, BandIsSymmetricAndMatchesLabel) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int i = 0; i < 200; ++i) {
    const double y = u(rng), f = u(rng), s = std::abs(u(rng)) + 0.1, n = std::abs(u(rng)) + 0.1;
    const DetectionRecord r = classify(0, y, f, s, n);
    EXPECT_NEAR(r.upper - f, f - r.lower, 1e-12);
    EXPECT_EQ(r.label == 0, y >= r.lower && y <= r.upper);
    EXPECT_EQ(r.label == 1, r.score > n);
  }
}

TEST(Classify, RaisingThresholdNeverAddsAnomalies) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int i = 0; i < 100; ++i) {
    const double y = u(rng), f = u(rng), s = std::abs(u(rng)) + 0.1;
    int prev = 1;
    for (double n = 0.25; n < 20; n += 0.25) {
      const int label = classify(0, y, f, s, n).label;
      EXPECT_LE(label, prev);
      prev = label;
    }
  }
}

TEST(StreamDetect, MinimumLengthGivesOneRecord) {
  const Model m = small_model();
  const auto series = noisy_line(13, 1);
  const auto records = stream_detect(series, m, {});
  ASSERT_EQ(records.size(), 13u);
  std::size_t live = 0;
  for (const auto& r : records) live += r.warmup ? 0 : 1;
  EXPECT_EQ(live, 1u);
  for (std::size_t t = 0; t < 12; ++t) {
    EXPECT_TRUE(records[t].warmup);
    EXPECT_EQ(records[t].label, 0);
  }
  EXPECT_THROW(stream_detect(std::span(series).subspan(0, 12), m, {}), std::invalid_argument);
}

TEST(StreamDetect, IsDeterministic) {
  const Model m = small_model();
  const auto series = noisy_line(60, 2);
  std::ostringstream a, b;
  write_detections(a, stream_detect(series, m, {}));
  write_detections(b, stream_detect(series, m, {}));
  EXPECT_EQ(a.str(), b.str());
}

TEST(StreamDetect, PrefixProperty) {
  const Model m = small_model(4);
  const auto series = noisy_line(50, 5);
  const auto full = stream_detect(series, m, {});
  for (std::size_t cut : {13u, 20u, 37u, 49u}) {
    const auto part = stream_detect(std::span(series).subspan(0, cut), m, {});
    ASSERT_EQ(part.size(), cut);
    for (std::size_t t = 0; t < cut; ++t) {
      EXPECT_EQ(nlohmann::json(part[t]).dump(), nlohmann::json(full[t]).dump()) << "cut " << cut << " t " << t;
    }
  }
}

TEST(StreamDetect, FutureValuesDoNotChangeEarlierRecords) {
  const Model m = small_model(6);
  auto series = noisy_line(40, 7);
  const auto before = stream_detect(series, m, {});
  series[30] += 1000.0;
  const auto after = stream_detect(series, m, {});
  for (std::size_t t = 0; t < 30; ++t) EXPECT_EQ(before[t].score, after[t].score);
  EXPECT_NE(before[30].score, after[30].score);
}

TEST(DetectPoint, DenormalizesForecast) {
  const Model m = small_model(8);
  const auto series = noisy_line(13, 9);
  const std::span<const double> lookback(series.data(), 12);
  const DetectionRecord r = detect_point(lookback, series[12], m, {}, 12);
  Window raw{series};
  const Window w = normalize(raw);
  NoGradGuard guard;
  const StackOutput out = m.forward(w.lookback());
  EXPECT_DOUBLE_EQ(r.forecast, out.forecast.item() * w.scale + w.mean);
  EXPECT_DOUBLE_EQ(r.sigma, out.sigma.item() * w.scale);
  EXPECT_EQ(r.index, 12u);
}

TEST(Detections, JsonLinesRoundTrip) {
  const Model m = small_model();
  const auto series = noisy_line(20, 10);
  const auto records = stream_detect(series, m, {});
  std::ostringstream out;
  write_detections(out, records);
  std::istringstream in(out.str());
  std::string line;
  std::size_t t = 12;
  while (std::getline(in, line)) {
    const auto back = nlohmann::json::parse(line).get<DetectionRecord>();
    EXPECT_EQ(back.index, t);
    EXPECT_EQ(back.score, records[t].score);
    EXPECT_EQ(back.forecast, records[t].forecast);
    ++t;
  }
  EXPECT_EQ(t, 20u);
}

TEST(RollingDetect, FlagsIsolatedSpike) {
  auto series = noisy_line(200, 11);
  series[150] += 10.0;
  const auto records = rolling_detect(series, 30, 3.0);
  EXPECT_EQ(records[150].label, 1);
  EXPECT_TRUE(records[10].warmup);
}

TEST(DetectorConfig, RejectsNonPositiveMultiplier) {
  EXPECT_THROW((DetectorConfig{0.0}).validate(), std::invalid_argument);
  EXPECT_THROW(stream_detect(noisy_line(20, 1), small_model(), DetectorConfig{-1.0}), std::invalid_argument);
}

}  // namespace
}  // namespace dbln
