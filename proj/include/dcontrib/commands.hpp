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

// Run configuration and the orchestration behind each CLI command.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dcontrib/baseline.hpp"
#include "dcontrib/dataset.hpp"
#include "dcontrib/network.hpp"
#include "dcontrib/protocol.hpp"
#include "dcontrib/transport.hpp"

namespace dcontrib {

enum class TransportKind { kInProcess, kSockets };

struct IngestConfig {
  std::filesystem::path input;
  std::string id_column = "id";
  std::vector<std::string> measurement_columns;
  std::size_t parts_per_observation = 1;
  std::optional<std::filesystem::path> setpoints;
  ActorSchema actor_schema;
  std::vector<std::string> shared_columns;
  std::vector<std::string> ignore_columns;
  double column_missing_threshold = 0.5;
  bool drop_rows_with_missing = true;
};

struct TransformConfig {
  bool standardise = false;
  MetricTransform transform;
};

struct CampaignConfig {
  std::size_t noise_features = 5;
  std::size_t min_overlap = 50;
  double floor_slack = 1.0;
  std::chrono::milliseconds deadline = std::chrono::hours(1);
  std::vector<std::string> decline;
};

struct CentralConfig {
  ShapOptions shap;  // seed is taken from RunConfig::seed
  bool include_noise = true;
};

struct CompareConfig {
  std::filesystem::path ranking;
  std::filesystem::path shap_summary;
};

/// Parsed and validated configuration file. Unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  TransportKind transport = TransportKind::kInProcess;
  std::optional<IngestConfig> ingest;
  std::optional<SyntheticSpec> synth;
  std::optional<std::filesystem::path> manifest;
  EnsembleHyper hyper;
  std::optional<TransformConfig> transform;
  CampaignConfig campaign;
  CentralConfig central;
  std::optional<CompareConfig> compare;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
TransportKind parse_transport(const std::string& name);

/// Per-actor CSVs plus the metric, described by manifest.json.
struct DataManifest {
  std::filesystem::path metric;
  struct Actor {
    std::string id;
    std::filesystem::path file;
    std::vector<std::string> shared;
  };
  std::vector<Actor> actors;
};

inline constexpr const char* kManifestFile = "manifest.json";

/// Writes actors/<id>.csv, metric.csv and manifest.json under `dir`.
void write_dataset(const std::filesystem::path& dir, const std::vector<ActorDataset>& actors,
                   const MetricSeries& metric);
DataManifest load_manifest(const std::filesystem::path& path);  // paths resolved against its directory
std::vector<ActorDataset> load_actors(const DataManifest& manifest);

using Logger = std::function<void(const std::string&)>;

struct IngestSummary {
  std::vector<std::string> dropped_columns;
  std::size_t dropped_rows = 0;
  std::size_t rows = 0;
  std::size_t actors = 0;
};

IngestSummary cmd_ingest(const RunConfig& config, const Logger& log);
void cmd_synth(const RunConfig& config, const Logger& log);
/// `actor_executable` is spawned in actor mode for the socket transport.
CampaignResult cmd_run_decentralised(const RunConfig& config, const std::string& actor_executable, const Logger& log);
void cmd_run_central(const RunConfig& config, const Logger& log);
void cmd_compare(const RunConfig& config, const Logger& log);

struct ActorModeOptions {
  std::filesystem::path dataset;
  std::string actor_id;
  SocketAddress listen;
  std::uint64_t seed = 0;
  ParticipationPolicy policy;
  int max_calls = 1;
};

/// Listens, reports the bound port through `on_listening`, then answers calls.
void serve_actor(const ActorModeOptions& options, const std::function<void(std::uint16_t)>& on_listening,
                 const Logger& log);

inline constexpr const char* kRankingFile = "ranking.csv";
inline constexpr const char* kCampaignLogFile = "campaign_log.txt";
inline constexpr const char* kShapValuesFile = "shap_values.csv";
inline constexpr const char* kShapInstancesFile = "shap_instances.csv";
inline constexpr const char* kShapSummaryFile = "shap_summary.csv";
inline constexpr const char* kGroundTruthFile = "ground_truth.csv";

}  // namespace dcontrib
