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
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace dbln {

struct LabeledSeries {
  std::string id;
  std::vector<std::int64_t> timestamps;
  std::vector<double> values;
  std::vector<int> labels;  // empty when unlabeled
  double interval = 1.0;    // seconds between samples

  std::size_t size() const { return values.size(); }
  bool labeled() const { return !labels.empty(); }

  void validate() const {
    if (timestamps.size() != values.size()) {
      throw std::invalid_argument(id + ": timestamps and values differ in length");
    }
    if (!labels.empty() && labels.size() != values.size()) {
      throw std::invalid_argument(id + ": labels and values differ in length");
    }
    for (std::size_t i = 1; i < timestamps.size(); ++i) {
      if (timestamps[i] <= timestamps[i - 1]) {
        throw std::invalid_argument(id + ": timestamps not strictly increasing at row " +
                                    std::to_string(i));
      }
    }
  }
};

inline void to_json(nlohmann::json& j, const LabeledSeries& s) {
  j = {{"id", s.id}, {"interval", s.interval}, {"timestamps", s.timestamps}, {"values", s.values},
       {"labels", s.labels}};
}

inline void from_json(const nlohmann::json& j, LabeledSeries& s) {
  s.id = j.at("id").get<std::string>();
  s.interval = j.at("interval").get<double>();
  s.timestamps = j.at("timestamps").get<std::vector<std::int64_t>>();
  s.values = j.at("values").get<std::vector<double>>();
  s.labels = j.value("labels", std::vector<int>{});
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

enum class TrendKind { VShape, Piecewise };

/// Polynomial in (t - start), active from `start` until the next piece.
struct PolyPiece {
  std::size_t start = 0;
  std::vector<double> coefficients;
};

struct Anomaly {
  std::size_t index = 0;
  double magnitude = 0.0;  // additive, in series units
};

struct SyntheticSpec {
  std::string id = "synthetic";
  std::size_t length = 1200;
  TrendKind trend = TrendKind::VShape;
  double amplitude = 10.0;  // v-shape rise from the minimum to either end
  double level = 0.0;
  std::vector<PolyPiece> pieces;
  double noise_std = 0.5;
  std::vector<Anomaly> anomalies;
  std::uint64_t seed = 0;
  double interval = 3600.0;

  void validate() const {
    if (length == 0) throw std::invalid_argument("synthetic length must be positive");
    if (noise_std < 0) throw std::invalid_argument("synthetic noise_std must be non-negative");
    if (trend == TrendKind::Piecewise && pieces.empty()) {
      throw std::invalid_argument("piecewise trend needs at least one piece");
    }
    for (const auto& a : anomalies) {
      if (a.index >= length) {
        throw std::invalid_argument("anomaly index " + std::to_string(a.index) + " outside series");
      }
    }
  }
};

inline void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  s = SyntheticSpec{};
  s.id = j.value("id", s.id);
  s.length = j.at("length").get<std::size_t>();
  const std::string trend = j.value("trend", "v-shape");
  if (trend == "v-shape") {
    s.trend = TrendKind::VShape;
  } else if (trend == "piecewise") {
    s.trend = TrendKind::Piecewise;
  } else {
    throw std::invalid_argument("unknown trend '" + trend + "' (expected v-shape|piecewise)");
  }
  s.amplitude = j.value("amplitude", s.amplitude);
  s.level = j.value("level", s.level);
  for (const auto& p : j.value("pieces", nlohmann::json::array())) {
    s.pieces.push_back({p.at("start").get<std::size_t>(), p.at("coefficients").get<std::vector<double>>()});
  }
  s.noise_std = j.at("noise_std").get<double>();
  for (const auto& a : j.value("anomalies", nlohmann::json::array())) {
    double magnitude = 0.0;
    if (a.contains("magnitude")) {
      magnitude = a.at("magnitude").get<double>();
    } else {
      magnitude = a.at("sigmas").get<double>() * s.noise_std;
    }
    s.anomalies.push_back({a.at("index").get<std::size_t>(), magnitude});
  }
  s.seed = j.value("seed", std::uint64_t{0});
  s.interval = j.value("interval", s.interval);
}

inline double trend_value(const SyntheticSpec& spec, std::size_t t) {
  if (spec.trend == TrendKind::VShape) {
    const double center = 0.5 * static_cast<double>(spec.length - 1);
    const double x = center > 0 ? (static_cast<double>(t) - center) / center : 0.0;
    return spec.level + spec.amplitude * x * x;
  }
  const PolyPiece* active = &spec.pieces.front();
  for (const auto& p : spec.pieces) {
    if (p.start <= t) active = &p;
  }
  const double u = static_cast<double>(t) - static_cast<double>(active->start);
  double acc = 0.0;
  double power = 1.0;
  for (double c : active->coefficients) {
    acc += c * power;
    power *= u;
  }
  return spec.level + acc;
}

namespace detail {
inline LabeledSeries generate(const SyntheticSpec& spec) {
  spec.validate();
  LabeledSeries s;
  s.id = spec.id;
  s.interval = spec.interval;
  s.values.resize(spec.length);
  s.timestamps.resize(spec.length);
  s.labels.assign(spec.length, 0);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t t = 0; t < spec.length; ++t) {
    s.timestamps[t] = static_cast<std::int64_t>(t) * static_cast<std::int64_t>(spec.interval);
    s.values[t] = trend_value(spec, t) + spec.noise_std * noise(rng);
  }
  for (const auto& a : spec.anomalies) {
    s.values[a.index] += a.magnitude;
    s.labels[a.index] = 1;
  }
  return s;
}
}  // namespace detail

/// Trend plus i.i.d. Gaussian noise, no anomalies.
inline LabeledSeries gen_trend_series(const SyntheticSpec& spec) {
  if (!spec.anomalies.empty()) throw std::invalid_argument("gen_trend_series takes no anomalies");
  return detail::generate(spec);
}

/// Trend plus noise with additive spikes, each labeled 1.
inline LabeledSeries gen_spike_series(const SyntheticSpec& spec) {
  if (spec.anomalies.empty()) throw std::invalid_argument("gen_spike_series needs at least one anomaly");
  return detail::generate(spec);
}

inline LabeledSeries generate_series(const SyntheticSpec& spec) { return detail::generate(spec); }

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  std::optional<std::size_t> column(std::span<const std::string> aliases) const {
    for (const auto& alias : aliases) {
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == alias) return i;
      }
    }
    return std::nullopt;
  }
};

namespace detail {
inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
      field += c;
    } else if (c == ',' && !quoted) {
      out.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(trim(field));
  return out;
}

inline std::string path_string(const std::filesystem::path& p) { return p.string(); }
}  // namespace detail

inline CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto fields = detail::split_csv_line(line);
    if (table.header.empty()) {
      if (!fields.empty() && fields[0].rfind("\xEF\xBB\xBF", 0) == 0) fields[0] = fields[0].substr(3);
      table.header = std::move(fields);
      continue;
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(line_no);
  }
  return table;
}

inline CsvTable read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_csv(in);
}

class CsvRowError : public std::runtime_error {
 public:
  CsvRowError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace detail {
inline double parse_double(const std::string& s, const std::string& file, std::size_t line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw CsvRowError(file, line, "malformed number '" + s + "'");
  }
}

inline std::int64_t parse_int(const std::string& s, const std::string& file, std::size_t line) {
  const double v = parse_double(s, file, line);
  if (v != std::floor(v)) throw CsvRowError(file, line, "expected an integer, got '" + s + "'");
  return static_cast<std::int64_t>(v);
}

inline int parse_label(const std::string& s, const std::string& file, std::size_t line) {
  const auto v = parse_int(s, file, line);
  if (v != 0 && v != 1) throw CsvRowError(file, line, "label must be 0 or 1, got '" + s + "'");
  return static_cast<int>(v);
}

inline double median_interval(const std::vector<std::int64_t>& ts) {
  if (ts.size() < 2) return 1.0;
  std::vector<std::int64_t> d;
  for (std::size_t i = 1; i < ts.size(); ++i) d.push_back(ts[i] - ts[i - 1]);
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  return static_cast<double>(d[d.size() / 2]);
}
}  // namespace detail

/// Accepted spellings for each logical column. Extend to support new layouts.
struct HeaderAliases {
  std::vector<std::string> timestamp{"timestamp", "timestamps"};
  std::vector<std::string> value{"value"};
  std::vector<std::string> label{"is_anomaly", "anomaly", "label"};
  std::vector<std::string> series_id{"KPI ID", "kpi_id", "id"};
};

/// One series from a single-series CSV. Returns nullopt when the value or
/// timestamp column is missing; malformed rows throw CsvRowError.
inline std::optional<LabeledSeries> parse_series_table(const CsvTable& table, const std::string& id,
                                                       const HeaderAliases& aliases = {}) {
  const auto ts_col = table.column(aliases.timestamp);
  const auto val_col = table.column(aliases.value);
  const auto lab_col = table.column(aliases.label);
  if (!ts_col || !val_col) return std::nullopt;
  LabeledSeries s;
  s.id = id;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.line_numbers[r];
    const std::size_t need = std::max({*ts_col, *val_col, lab_col.value_or(0)}) + 1;
    if (row.size() < need) {
      throw CsvRowError(id, line, "expected at least " + std::to_string(need) + " fields");
    }
    s.timestamps.push_back(detail::parse_int(row[*ts_col], id, line));
    s.values.push_back(detail::parse_double(row[*val_col], id, line));
    if (lab_col) s.labels.push_back(detail::parse_label(row[*lab_col], id, line));
  }
  s.interval = detail::median_interval(s.timestamps);
  s.validate();
  return s;
}

inline LabeledSeries load_series_csv(const std::filesystem::path& path, const HeaderAliases& aliases = {}) {
  auto s = parse_series_table(read_csv_file(path), path.stem().string(), aliases);
  if (!s) throw std::runtime_error(path.string() + ": needs timestamp and value columns");
  return *s;
}

inline void write_series_csv(std::ostream& out, const LabeledSeries& s) {
  out << "timestamp,value,label\n" << std::setprecision(17);
  for (std::size_t i = 0; i < s.size(); ++i) {
    out << s.timestamps[i] << ',' << s.values[i] << ',' << (s.labeled() ? s.labels[i] : 0) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Public benchmark loaders
// ---------------------------------------------------------------------------

struct LoadResult {
  std::vector<LabeledSeries> series;
  std::vector<std::string> warnings;
};

/// Every *.csv below `dir` in path order, one series per file, hourly sampling.
inline LoadResult load_yahoo(const std::filesystem::path& dir, const HeaderAliases& aliases = {}) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  LoadResult out;
  for (const auto& f : files) {
    const std::string id = std::filesystem::relative(f, dir).replace_extension().generic_string();
    auto s = parse_series_table(read_csv_file(f), id, aliases);
    if (!s) {
      out.warnings.push_back("skipped " + f.string() + ": no timestamp/value columns");
      continue;
    }
    s->interval = 3600.0;
    out.series.push_back(std::move(*s));
  }
  return out;
}

/// One series per KPI ID, in order of first appearance.
inline std::vector<LabeledSeries> load_kpi_file(const std::filesystem::path& path,
                                                const HeaderAliases& aliases = {}) {
  const CsvTable table = read_csv_file(path);
  const auto ts_col = table.column(aliases.timestamp);
  const auto val_col = table.column(aliases.value);
  const auto lab_col = table.column(aliases.label);
  const auto id_col = table.column(aliases.series_id);
  if (!ts_col || !val_col || !lab_col || !id_col) {
    std::string found;
    for (const auto& h : table.header) found += (found.empty() ? "" : ", ") + h;
    throw std::runtime_error(path.string() + ": expected columns timestamp, value, label, KPI ID; found: " +
                             found);
  }
  const std::string file = path.string();
  std::vector<LabeledSeries> out;
  std::map<std::string, std::size_t> index;
  const std::size_t need = std::max({*ts_col, *val_col, *lab_col, *id_col}) + 1;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.line_numbers[r];
    if (row.size() < need) throw CsvRowError(file, line, "expected at least " + std::to_string(need) + " fields");
    const std::string& id = row[*id_col];
    auto it = index.find(id);
    if (it == index.end()) {
      it = index.emplace(id, out.size()).first;
      out.push_back(LabeledSeries{id, {}, {}, {}, 60.0});
    }
    LabeledSeries& s = out[it->second];
    s.timestamps.push_back(detail::parse_int(row[*ts_col], file, line));
    s.values.push_back(detail::parse_double(row[*val_col], file, line));
    s.labels.push_back(detail::parse_label(row[*lab_col], file, line));
  }
  for (auto& s : out) {
    s.interval = detail::median_interval(s.timestamps);
    s.validate();
  }
  return out;
}

inline std::pair<std::vector<LabeledSeries>, std::vector<LabeledSeries>> load_kpi(
    const std::filesystem::path& train_path, const std::filesystem::path& test_path,
    const HeaderAliases& aliases = {}) {
  return {load_kpi_file(train_path, aliases), load_kpi_file(test_path, aliases)};
}

struct DatasetTotals {
  std::size_t curves = 0;
  std::size_t points = 0;
  std::size_t anomalies = 0;
  std::size_t min_length = 0;
  std::size_t max_length = 0;
};

inline DatasetTotals totals(const std::vector<LabeledSeries>& all) {
  DatasetTotals t;
  for (const auto& s : all) {
    if (t.curves == 0 || s.size() < t.min_length) t.min_length = s.size();
    t.max_length = std::max(t.max_length, s.size());
    ++t.curves;
    t.points += s.size();
    for (int l : s.labels) t.anomalies += static_cast<std::size_t>(l);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const IndexRange&) const = default;
};

struct SplitRanges {
  IndexRange train;
  IndexRange validation;
  IndexRange test;
};

enum class SplitScheme { Yahoo, Kpi };

/// [0, train_end), [train_end, val_end), [val_end, n).
inline SplitRanges split_at(std::size_t n, std::size_t train_end, std::size_t val_end) {
  if (!(train_end > 0 && train_end < val_end && val_end < n)) {
    throw std::invalid_argument("series of length " + std::to_string(n) + " cannot be split at " +
                                std::to_string(train_end) + "/" + std::to_string(val_end));
  }
  return {{0, train_end}, {train_end, val_end}, {val_end, n}};
}

/// Yahoo: 0-400 train, 400-500 validation, rest test. KPI (training file):
/// all but the last 1000 points train, last 1000 validation; the test file
/// supplies the test curves, so the test range is empty.
inline SplitRanges split(std::size_t n, SplitScheme scheme) {
  if (scheme == SplitScheme::Yahoo) return split_at(n, 400, 500);
  if (n <= 1000) {
    throw std::invalid_argument("KPI training curve of length " + std::to_string(n) +
                                " is shorter than the 1000-point validation tail");
  }
  return {{0, n - 1000}, {n - 1000, n}, {n, n}};
}

/// The range plus up to `context` points preceding it, so windows can target
/// the range's first point.
inline std::span<const double> with_context(std::span<const double> values, IndexRange range,
                                            std::size_t context) {
  const std::size_t begin = range.begin >= context ? range.begin - context : 0;
  return values.subspan(begin, range.end - begin);
}

}  // namespace dbln
