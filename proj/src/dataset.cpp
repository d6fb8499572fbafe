// Copyright 2026 The dcontrib Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dcontrib/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "dcontrib/error.hpp"
#include "dcontrib/util.hpp"

namespace dcontrib {

namespace {

bool is_missing_token(std::string_view cell) {
  while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
  while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) {
    cell.remove_suffix(1);
  }
  return cell.empty() || cell == "NaN" || cell == "nan" || cell == "NA";
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string part_label(int index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return "part-" + digits;
}

}  // namespace

std::optional<std::size_t> RawTable::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t RawTable::missing_count() const {
  std::size_t n = 0;
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) n += is_missing(values(r, c)) ? 1 : 0;
  }
  return n;
}

RawTable parse_csv(std::istream& in, const std::string& id_column) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) fail(ErrorKind::kParse, "csv has no header row");

  std::vector<std::string> header = split_csv_record(line);
  for (auto& h : header) h = trim(h);
  std::optional<std::size_t> id_pos;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!seen.insert(header[i]).second) fail(ErrorKind::kParse, "duplicate column name: " + header[i]);
    if (header[i] == id_column) id_pos = i;
  }
  if (!id_pos) fail(ErrorKind::kInvalidArgument, "id column not found: " + id_column);

  RawTable table;
  table.id_column = id_column;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i != *id_pos) table.columns.push_back(header[i]);
  }

  std::vector<double> cells;
  std::unordered_set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_record(line);
    if (fields.size() != header.size()) {
      fail(ErrorKind::kParse, "row at line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " fields, found " +
                                  std::to_string(fields.size()));
    }
    std::string id = trim(fields[*id_pos]);
    if (id.empty()) fail(ErrorKind::kParse, "row at line " + std::to_string(line_no) + ": empty id");
    if (!ids.insert(id).second) {
      fail(ErrorKind::kParse, "row at line " + std::to_string(line_no) + ": duplicate id " + id);
    }
    table.ids.push_back(std::move(id));
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i == *id_pos) continue;
      double v = kMissing;
      if (!is_missing_token(fields[i]) && !parse_double(fields[i], v)) {
        fail(ErrorKind::kParse, "row at line " + std::to_string(line_no) + ", column " + header[i] +
                                    ": not a number: " + fields[i]);
      }
      cells.push_back(v);
    }
  }

  const auto rows = static_cast<Eigen::Index>(table.ids.size());
  const auto cols = static_cast<Eigen::Index>(table.columns.size());
  table.values.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) table.values(r, c) = cells[r * cols + c];
  }
  return table;
}

RawTable load_csv(const std::filesystem::path& path, const std::string& id_column) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open csv: " + path.string());
  return parse_csv(in, id_column);
}

RawTable clean_measurements(const RawTable& table, double column_missing_threshold, bool drop_rows_with_missing,
                            std::span<const std::string> measurement_columns, CleaningReport* report) {
  require(column_missing_threshold > 0.0 && column_missing_threshold <= 1.0,
          "column_missing_threshold must be in (0, 1]");
  for (const auto& m : measurement_columns) {
    require(table.column_index(m).has_value(), "unknown measurement column: " + m);
  }
  CleaningReport local;
  const auto rows = table.values.rows();

  std::vector<Eigen::Index> kept_cols;
  for (Eigen::Index c = 0; c < table.values.cols(); ++c) {
    const std::string& name = table.columns[c];
    const bool subject = measurement_columns.empty() ||
                         std::find(measurement_columns.begin(), measurement_columns.end(), name) !=
                             measurement_columns.end();
    std::size_t missing = 0;
    for (Eigen::Index r = 0; r < rows; ++r) missing += is_missing(table.values(r, c)) ? 1 : 0;
    const double fraction = rows == 0 ? 0.0 : static_cast<double>(missing) / static_cast<double>(rows);
    if (subject && fraction > column_missing_threshold) {
      local.dropped_columns.push_back(name);
    } else {
      kept_cols.push_back(c);
    }
  }
  if (kept_cols.empty()) fail(ErrorKind::kInvalidArgument, "cleaning dropped every column");

  std::vector<Eigen::Index> kept_rows;
  for (Eigen::Index r = 0; r < rows; ++r) {
    bool any_missing = false;
    for (auto c : kept_cols) any_missing = any_missing || is_missing(table.values(r, c));
    if (any_missing && drop_rows_with_missing) {
      ++local.dropped_rows;
    } else {
      kept_rows.push_back(r);
    }
  }

  RawTable out;
  out.id_column = table.id_column;
  for (auto c : kept_cols) out.columns.push_back(table.columns[c]);
  out.values.resize(static_cast<Eigen::Index>(kept_rows.size()), static_cast<Eigen::Index>(kept_cols.size()));
  for (std::size_t i = 0; i < kept_rows.size(); ++i) {
    out.ids.push_back(table.ids[kept_rows[i]]);
    for (std::size_t j = 0; j < kept_cols.size(); ++j) {
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = table.values(kept_rows[i], kept_cols[j]);
    }
  }
  if (report) *report = std::move(local);
  return out;
}

double aggregate_quality(const MeasurementBlock& block) {
  require(block.parts > 0 && block.types > 0, "measurement block is empty");
  const std::size_t total = block.parts * block.types;
  require(block.actuals.size() == total, "actual count must equal parts * types");
  require(block.setpoints.size() == total, "setpoint count must equal parts * types");
  double sum = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    const double setpoint = block.setpoints[i];
    if (!(setpoint > 0.0)) fail(ErrorKind::kDomain, "setpoint must be strictly positive");
    if (!std::isfinite(block.actuals[i])) fail(ErrorKind::kDomain, "measurement value is missing or non-finite");
    sum += std::abs(block.actuals[i] - setpoint) / setpoint;
  }
  return sum / static_cast<double>(block.types);
}

MetricSeries::MetricSeries(std::vector<MetricEntry> entries) : entries_(std::move(entries)) {
  std::unordered_set<std::string> seen;
  for (const auto& e : entries_) {
    require(seen.insert(e.part_id).second, "duplicate part id in metric series: " + e.part_id);
    require(std::isfinite(e.value), "metric value for " + e.part_id + " is not finite");
  }
}

std::vector<std::string> MetricSeries::part_ids() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.part_id);
  return out;
}

std::vector<double> MetricSeries::values() const {
  std::vector<double> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.value);
  return out;
}

std::map<std::string, double> MetricSeries::as_map() const {
  std::map<std::string, double> out;
  for (const auto& e : entries_) out.emplace(e.part_id, e.value);
  return out;
}

MetricSeries load_metric_csv(const std::filesystem::path& path) {
  RawTable t = load_csv(path, "part_id");
  if (t.columns.size() != 1 || t.columns[0] != "value") {
    fail(ErrorKind::kParse, "metric csv must have columns part_id,value: " + path.string());
  }
  std::vector<MetricEntry> entries;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const double v = t.values(static_cast<Eigen::Index>(r), 0);
    if (is_missing(v)) fail(ErrorKind::kParse, "metric value missing for " + t.ids[r]);
    entries.push_back({t.ids[r], v});
  }
  return MetricSeries(std::move(entries));
}

std::string metric_to_csv(const MetricSeries& series) {
  std::string out = "part_id,value\n";
  for (const auto& e : series.entries()) {
    out += csv_escape(e.part_id);
    out += ',';
    out += format_double(e.value);
    out += '\n';
  }
  return out;
}

SetpointSource load_setpoint_csv(const std::filesystem::path& path) {
  RawTable t = load_csv(path, "measurement");
  auto col = t.column_index("setpoint");
  if (!col) fail(ErrorKind::kParse, "setpoint csv must have columns measurement,setpoint");
  SetpointSource source;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    source.fixed[t.ids[r]] = t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(*col));
  }
  return source;
}

std::vector<std::string> setpoint_column_candidates(const std::string& measurement) {
  std::vector<std::string> out{measurement + ".Setpoint"};
  constexpr std::string_view kActual = ".Actual";
  if (measurement.size() > kActual.size() &&
      measurement.compare(measurement.size() - kActual.size(), kActual.size(), kActual) == 0) {
    out.push_back(measurement.substr(0, measurement.size() - kActual.size()) + ".Setpoint");
  }
  return out;
}

MetricSeries build_metric_series(const RawTable& table, std::span<const std::string> measurement_columns,
                                 const SetpointSource& setpoints, std::size_t parts_per_observation) {
  require(table.rows() > 0, "cannot build a metric series from an empty table");
  require(!measurement_columns.empty(), "no measurement columns given");
  require(parts_per_observation > 0 && measurement_columns.size() % parts_per_observation == 0,
          "measurement column count must be a multiple of parts_per_observation");

  struct Source {
    Eigen::Index value_col;
    std::optional<Eigen::Index> setpoint_col;
    double fixed = 0.0;
  };
  std::vector<Source> sources;
  for (const auto& name : measurement_columns) {
    auto idx = table.column_index(name);
    if (!idx) fail(ErrorKind::kInvalidArgument, "measurement column not in table: " + name);
    Source s{static_cast<Eigen::Index>(*idx), std::nullopt, 0.0};
    for (const auto& cand : setpoint_column_candidates(name)) {
      if (auto sp = table.column_index(cand)) {
        s.setpoint_col = static_cast<Eigen::Index>(*sp);
        break;
      }
    }
    if (!s.setpoint_col) {
      auto it = setpoints.fixed.find(name);
      if (it == setpoints.fixed.end()) fail(ErrorKind::kInvalidArgument, "no setpoint for measurement " + name);
      s.fixed = it->second;
    }
    sources.push_back(s);
  }

  MeasurementBlock block;
  block.parts = parts_per_observation;
  block.types = measurement_columns.size() / parts_per_observation;
  std::vector<MetricEntry> entries;
  entries.reserve(table.rows());
  for (std::size_t r = 0; r < table.rows(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    block.actuals.clear();
    block.setpoints.clear();
    for (const auto& s : sources) {
      const double v = table.values(row, s.value_col);
      const double sp = s.setpoint_col ? table.values(row, *s.setpoint_col) : s.fixed;
      if (is_missing(v) || is_missing(sp)) {
        fail(ErrorKind::kInvalidArgument,
             "observation " + table.ids[r] + " has a missing measurement; clean the table first");
      }
      block.actuals.push_back(v);
      block.setpoints.push_back(sp);
    }
    entries.push_back({table.ids[r], aggregate_quality(block)});
  }
  return MetricSeries(std::move(entries));
}

void ActorDataset::validate() const {
  require(!actor_id.empty(), "actor id is empty");
  require(!feature_names.empty(), "actor " + actor_id + " has no feature columns");
  require(shared.size() == feature_names.size(), "shared flag count mismatch for " + actor_id);
  require(features.rows() == static_cast<Eigen::Index>(part_ids.size()) &&
              features.cols() == static_cast<Eigen::Index>(feature_names.size()),
          "feature matrix shape mismatch for " + actor_id);
  require(features.allFinite(), "actor " + actor_id + " has missing or non-finite features");
}

std::vector<ActorDataset> partition_actors(const RawTable& table, const ActorSchema& schema,
                                           std::span<const std::string> shared_columns,
                                           std::span<const std::string> ignored_columns) {
  require(!schema.empty(), "actor schema is empty");
  std::unordered_map<std::string, std::string> owner;
  std::set<std::string> actor_ids;
  for (const auto& [actor, cols] : schema) {
    require(actor != kNoiseActorId && actor != kSharedActorId, "reserved actor id: " + actor);
    require(actor_ids.insert(actor).second, "actor listed twice in schema: " + actor);
    for (const auto& c : cols) {
      require(table.column_index(c).has_value(), "schema column not in table: " + c);
      auto [it, inserted] = owner.emplace(c, actor);
      require(inserted, "column " + c + " assigned to both " + it->second + " and " + actor);
    }
  }
  std::set<std::string> shared(shared_columns.begin(), shared_columns.end());
  for (const auto& c : shared) {
    require(table.column_index(c).has_value(), "shared column not in table: " + c);
    require(!owner.count(c), "column " + c + " is both shared and assigned to " + (owner.count(c) ? owner[c] : ""));
  }
  std::set<std::string> ignored(ignored_columns.begin(), ignored_columns.end());
  for (const auto& c : table.columns) {
    if (ignored.count(c)) continue;
    require(owner.count(c) || shared.count(c), "column not assigned to any actor: " + c);
  }

  // Shared columns in table order.
  std::vector<std::string> shared_ordered;
  for (const auto& c : table.columns) {
    if (shared.count(c)) shared_ordered.push_back(c);
  }

  std::vector<ActorDataset> out;
  for (const auto& [actor, cols] : schema) {
    ActorDataset ds;
    ds.actor_id = actor;
    ds.part_ids = table.ids;
    for (const auto& c : cols) {
      ds.feature_names.push_back(c);
      ds.shared.push_back(false);
    }
    for (const auto& c : shared_ordered) {
      ds.feature_names.push_back(c);
      ds.shared.push_back(true);
    }
    require(!ds.feature_names.empty(), "actor " + actor + " has no feature columns");
    ds.features.resize(static_cast<Eigen::Index>(table.rows()), static_cast<Eigen::Index>(ds.feature_names.size()));
    for (std::size_t j = 0; j < ds.feature_names.size(); ++j) {
      ds.features.col(static_cast<Eigen::Index>(j)) =
          table.values.col(static_cast<Eigen::Index>(*table.column_index(ds.feature_names[j])));
    }
    out.push_back(std::move(ds));
  }
  return out;
}

std::string actor_to_csv(const ActorDataset& actor) {
  std::string out = "part_id";
  for (const auto& n : actor.feature_names) {
    out += ',';
    out += csv_escape(n);
  }
  out += '\n';
  for (std::size_t r = 0; r < actor.rows(); ++r) {
    out += csv_escape(actor.part_ids[r]);
    for (std::size_t c = 0; c < actor.cols(); ++c) {
      out += ',';
      out += format_double(actor.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
    }
    out += '\n';
  }
  return out;
}

ActorDataset load_actor_csv(const std::filesystem::path& path, const std::string& actor_id,
                            std::span<const std::string> shared_columns) {
  RawTable t = load_csv(path, "part_id");
  ActorDataset ds;
  ds.actor_id = actor_id;
  ds.part_ids = t.ids;
  ds.feature_names = t.columns;
  for (const auto& n : t.columns) {
    ds.shared.push_back(std::find(shared_columns.begin(), shared_columns.end(), n) != shared_columns.end());
  }
  ds.features = t.values;
  ds.validate();
  return ds;
}

void SyntheticSpec::validate() const {
  require(actor_count >= 2, "synthetic spec needs at least 2 actors");
  require(features_per_actor >= 1, "features_per_actor must be >= 1");
  require(signal_weights.size() == static_cast<std::size_t>(actor_count),
          "signal_weights must have one entry per actor");
  for (double w : signal_weights) require(std::isfinite(w) && w >= 0.0, "signal weights must be >= 0");
  require(std::isfinite(noise_std) && noise_std > 0.0, "noise_std must be > 0");
  require(row_count >= 200, "row_count must be >= 200");
  require(cross_correlation >= 0.0 && cross_correlation < 1.0, "cross_correlation must be in [0, 1)");
  require(correlation_source >= 0 && correlation_source < actor_count, "correlation_source out of range");
  for (int a : correlated_actors) {
    require(a >= 0 && a < actor_count, "correlated actor index out of range");
    require(a != correlation_source, "an actor cannot be correlated with itself");
  }
}

double synthetic_signal(std::span<const double> features) {
  const std::size_t k = features.size();
  double s = 0.0;
  for (double x : features) s += std::sin(x);
  // Var(sin X) for X ~ N(0,1) is (1 - e^-2) / 2; Var(X1 X2) = 1 for independent X1, X2.
  double variance = static_cast<double>(k) * (1.0 - std::exp(-2.0)) / 2.0;
  if (k >= 2) {
    s += features[0] * features[1];
    variance += 1.0;
  }
  return s / std::sqrt(variance);
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const int n = spec.row_count;
  const int k = spec.features_per_actor;
  const int a_count = spec.actor_count;

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Eigen::MatrixXd> base(static_cast<std::size_t>(a_count), Eigen::MatrixXd(n, k));
  for (int r = 0; r < n; ++r) {
    for (int a = 0; a < a_count; ++a) {
      for (int j = 0; j < k; ++j) base[a](r, j) = normal(rng);
    }
  }
  std::vector<double> noise(static_cast<std::size_t>(n));
  for (auto& e : noise) e = normal(rng) * spec.noise_std;

  std::vector<Eigen::MatrixXd> features = base;
  if (spec.cross_correlation > 0.0) {
    std::vector<int> targets = spec.correlated_actors;
    if (targets.empty()) {
      for (int a = 0; a < a_count; ++a) {
        if (a != spec.correlation_source) targets.push_back(a);
      }
    }
    const double rho = spec.cross_correlation;
    const double keep = std::sqrt(1.0 - rho * rho);
    for (int a : targets) {
      features[a] = keep * base[a] + rho * base[spec.correlation_source];
    }
  }

  SyntheticData out;
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) ids.push_back(part_label(r + 1));

  std::vector<double> metric(noise);
  std::vector<double> row(static_cast<std::size_t>(k));
  for (int a = 0; a < a_count; ++a) {
    const double w = spec.signal_weights[a];
    for (int r = 0; r < n; ++r) {
      for (int j = 0; j < k; ++j) row[j] = features[a](r, j);
      metric[r] += w * synthetic_signal(row);
    }
  }

  for (int a = 0; a < a_count; ++a) {
    ActorDataset ds;
    ds.actor_id = "actor" + std::to_string(a + 1);
    ds.part_ids = ids;
    for (int j = 0; j < k; ++j) {
      ds.feature_names.push_back(ds.actor_id + ".f" + std::to_string(j + 1));
      ds.shared.push_back(false);
    }
    ds.features = features[a];
    out.ground_truth.emplace_back(ds.actor_id, spec.signal_weights[a]);
    out.actors.push_back(std::move(ds));
  }
  std::vector<MetricEntry> entries;
  entries.reserve(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) entries.push_back({ids[r], metric[r]});
  out.metric = MetricSeries(std::move(entries));
  return out;
}

ActorDataset make_noise_actor(std::size_t row_count, std::size_t feature_count,
                              std::span<const std::string> part_ids, std::uint64_t seed) {
  require(part_ids.size() == row_count, "part id count must equal row_count");
  require(feature_count >= 1, "noise actor needs at least one feature");
  ActorDataset ds;
  ds.actor_id = kNoiseActorId;
  ds.part_ids.assign(part_ids.begin(), part_ids.end());
  for (std::size_t j = 0; j < feature_count; ++j) {
    ds.feature_names.push_back("noise" + std::to_string(j + 1));
    ds.shared.push_back(false);
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ds.features.resize(static_cast<Eigen::Index>(row_count), static_cast<Eigen::Index>(feature_count));
  for (Eigen::Index r = 0; r < ds.features.rows(); ++r) {
    for (Eigen::Index c = 0; c < ds.features.cols(); ++c) ds.features(r, c) = normal(rng);
  }
  return ds;
}

AlignedData inner_join(const ActorDataset& actor, const MetricSeries& metric) {
  const auto lookup = metric.as_map();
  AlignedData out;
  std::vector<Eigen::Index> rows;
  for (std::size_t r = 0; r < actor.rows(); ++r) {
    auto it = lookup.find(actor.part_ids[r]);
    if (it == lookup.end()) continue;
    rows.push_back(static_cast<Eigen::Index>(r));
    out.part_ids.push_back(actor.part_ids[r]);
    out.targets.push_back(it->second);
  }
  out.features.resize(static_cast<Eigen::Index>(rows.size()), actor.features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.features.row(static_cast<Eigen::Index>(i)) = actor.features.row(rows[i]);
  return out;
}

}  // namespace dcontrib
