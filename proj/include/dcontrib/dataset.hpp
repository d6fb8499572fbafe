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

#pragma once

// Multi-stage process data: CSV ingestion, cleaning, the quality KPI, the
// per-actor feature partition, and the synthetic multi-echelon generator.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace dcontrib {

/// Cells read as empty or "NaN" are stored as this value.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return v != v; }

/// A CSV table with one identifier column. Rows keep file (chronological) order.
struct RawTable {
  std::string id_column;
  std::vector<std::string> columns;  // value columns, id column excluded
  std::vector<std::string> ids;
  Eigen::MatrixXd values;            // ids.size() x columns.size()

  std::size_t rows() const { return ids.size(); }
  std::optional<std::size_t> column_index(std::string_view name) const;
  std::size_t missing_count() const;
};

RawTable load_csv(const std::filesystem::path& path, const std::string& id_column);
RawTable parse_csv(std::istream& in, const std::string& id_column);

struct CleaningReport {
  std::vector<std::string> dropped_columns;
  std::size_t dropped_rows = 0;
};

/// Drops measurement columns whose missing fraction exceeds `column_missing_threshold`,
/// then (optionally) drops every row that still has a missing cell. Never imputes.
/// `measurement_columns` empty means all columns are subject to the column rule.
RawTable clean_measurements(const RawTable& table, double column_missing_threshold,
                            bool drop_rows_with_missing, std::span<const std::string> measurement_columns = {},
                            CleaningReport* report = nullptr);

/// `parts` measured parts, each with `types` measurement types. Row-major:
/// value index = part * types + type. Setpoints are given per measured value.
struct MeasurementBlock {
  std::size_t parts = 0;
  std::size_t types = 0;
  std::vector<double> actuals;
  std::vector<double> setpoints;
};

/// Mean absolute relative deviation from setpoint, summed over all measured
/// values and divided by the measurement-type count.
double aggregate_quality(const MeasurementBlock& block);

struct MetricEntry {
  std::string part_id;
  double value = 0.0;
  bool operator==(const MetricEntry&) const = default;
};

/// (part id, value) pairs; ids unique, values finite.
class MetricSeries {
 public:
  MetricSeries() = default;
  explicit MetricSeries(std::vector<MetricEntry> entries);

  const std::vector<MetricEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::vector<std::string> part_ids() const;
  std::vector<double> values() const;
  std::map<std::string, double> as_map() const;

  bool operator==(const MetricSeries&) const = default;

 private:
  std::vector<MetricEntry> entries_;
};

MetricSeries load_metric_csv(const std::filesystem::path& path);
std::string metric_to_csv(const MetricSeries& series);

/// Where the setpoint of a measurement column comes from: a companion column
/// `<name>.Setpoint` (or `<stem>.Setpoint` for a `<stem>.Actual` column) in the
/// same table, else this fixed map keyed by measurement name.
struct SetpointSource {
  std::map<std::string, double> fixed;
};

SetpointSource load_setpoint_csv(const std::filesystem::path& path);

/// Name of the companion setpoint column for a measurement column.
std::vector<std::string> setpoint_column_candidates(const std::string& measurement);

/// One KPI per observation. Measurement columns are grouped part-major:
/// columns [p*types, (p+1)*types) belong to part p.
MetricSeries build_metric_series(const RawTable& table, std::span<const std::string> measurement_columns,
                                 const SetpointSource& setpoints, std::size_t parts_per_observation = 1);

struct ActorDataset {
  std::string actor_id;
  std::vector<std::string> part_ids;
  std::vector<std::string> feature_names;
  std::vector<bool> shared;  // per feature column
  Eigen::MatrixXd features;  // part_ids.size() x feature_names.size()

  std::size_t rows() const { return part_ids.size(); }
  std::size_t cols() const { return feature_names.size(); }
  void validate() const;
};

inline constexpr const char* kNoiseActorId = "noise-baseline";
inline constexpr const char* kSharedActorId = "shared";

/// Ordered actor -> columns assignment.
using ActorSchema = std::vector<std::pair<std::string, std::vector<std::string>>>;

/// Every column not listed in `ignored_columns` must belong to exactly one actor
/// or be shared. Shared columns are copied into every actor after its own columns.
std::vector<ActorDataset> partition_actors(const RawTable& table, const ActorSchema& schema,
                                           std::span<const std::string> shared_columns,
                                           std::span<const std::string> ignored_columns = {});

std::string actor_to_csv(const ActorDataset& actor);
ActorDataset load_actor_csv(const std::filesystem::path& path, const std::string& actor_id,
                            std::span<const std::string> shared_columns = {});

struct SyntheticSpec {
  int actor_count = 4;
  int features_per_actor = 4;
  std::vector<double> signal_weights{3.0, 2.0, 1.0, 0.5};
  double noise_std = 0.5;
  int row_count = 2000;
  double cross_correlation = 0.0;
  /// Actors whose features get mixed with the source actor's features. Empty
  /// means every actor other than the source.
  std::vector<int> correlated_actors;
  int correlation_source = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticData {
  std::vector<ActorDataset> actors;
  MetricSeries metric;
  std::vector<std::pair<std::string, double>> ground_truth;
};

/// Unit-variance signal of one actor's feature row: normalised sum of sines plus
/// the product of the first two features.
double synthetic_signal(std::span<const double> features);

SyntheticData generate_synthetic(const SyntheticSpec& spec);

ActorDataset make_noise_actor(std::size_t row_count, std::size_t feature_count,
                              std::span<const std::string> part_ids, std::uint64_t seed);

/// Rows of `actor` whose part id is in `metric`, in actor row order, with the
/// matching targets.
struct AlignedData {
  std::vector<std::string> part_ids;
  Eigen::MatrixXd features;
  std::vector<double> targets;
};

AlignedData inner_join(const ActorDataset& actor, const MetricSeries& metric);

}  // namespace dcontrib
