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

#include "dcontrib/commands.hpp"

#include <algorithm>
#include <memory>
#include <set>

#include <json.hpp>

#include "dcontrib/error.hpp"
#include "dcontrib/evaluation.hpp"
#include "dcontrib/util.hpp"
#include "hyper_json.hpp"

namespace dcontrib {

using nlohmann::json;

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) fail(ErrorKind::kInvalidArgument, where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; });
    if (!known) fail(ErrorKind::kInvalidArgument, "unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void read_opt(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) out = it->get<T>();
}

IngestConfig parse_ingest(const json& j) {
  check_keys(j,
             {"input", "id_column", "measurement_columns", "parts_per_observation", "setpoints", "actor_schema",
              "shared_columns", "ignore_columns", "column_missing_threshold", "drop_rows_with_missing"},
             "ingest");
  IngestConfig c;
  c.input = j.at("input").get<std::string>();
  read_opt(j, "id_column", c.id_column);
  c.measurement_columns = j.at("measurement_columns").get<std::vector<std::string>>();
  read_opt(j, "parts_per_observation", c.parts_per_observation);
  if (j.contains("setpoints")) c.setpoints = j.at("setpoints").get<std::string>();
  for (const auto& entry : j.at("actor_schema")) {
    check_keys(entry, {"actor", "columns"}, "ingest.actor_schema entry");
    c.actor_schema.emplace_back(entry.at("actor").get<std::string>(), entry.at("columns").get<std::vector<std::string>>());
  }
  read_opt(j, "shared_columns", c.shared_columns);
  read_opt(j, "ignore_columns", c.ignore_columns);
  read_opt(j, "column_missing_threshold", c.column_missing_threshold);
  read_opt(j, "drop_rows_with_missing", c.drop_rows_with_missing);
  return c;
}

SyntheticSpec parse_synth(const json& j) {
  check_keys(j,
             {"actor_count", "features_per_actor", "signal_weights", "noise_std", "row_count", "cross_correlation",
              "correlated_actors", "correlation_source"},
             "synth");
  SyntheticSpec s;
  read_opt(j, "actor_count", s.actor_count);
  read_opt(j, "features_per_actor", s.features_per_actor);
  read_opt(j, "signal_weights", s.signal_weights);
  read_opt(j, "noise_std", s.noise_std);
  read_opt(j, "row_count", s.row_count);
  read_opt(j, "cross_correlation", s.cross_correlation);
  read_opt(j, "correlated_actors", s.correlated_actors);
  read_opt(j, "correlation_source", s.correlation_source);
  return s;
}

}  // namespace

TransportKind parse_transport(const std::string& name) {
  if (name == "in-process") return TransportKind::kInProcess;
  if (name == "sockets") return TransportKind::kSockets;
  fail(ErrorKind::kInvalidArgument, "transport must be in-process or sockets, got " + name);
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  try {
    const json j = json::parse(text);
    check_keys(j,
               {"seed", "output_dir", "transport", "ingest", "synth", "data", "hyper", "transform", "campaign",
                "central", "compare"},
               "config");
    read_opt(j, "seed", c.seed);
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("transport")) c.transport = parse_transport(j.at("transport").get<std::string>());
    if (j.contains("ingest")) c.ingest = parse_ingest(j.at("ingest"));
    if (j.contains("synth")) {
      c.synth = parse_synth(j.at("synth"));
      c.synth->validate();
    }
    if (j.contains("data")) {
      check_keys(j.at("data"), {"manifest"}, "data");
      c.manifest = j.at("data").at("manifest").get<std::string>();
    }
    if (j.contains("hyper")) c.hyper = detail::hyper_from_json(j.at("hyper"), c.hyper, /*strict=*/true);
    c.hyper.validate();
    if (j.contains("transform")) {
      const json& t = j.at("transform");
      check_keys(t, {"scale", "offset", "standardise"}, "transform");
      TransformConfig tc;
      read_opt(t, "standardise", tc.standardise);
      read_opt(t, "scale", tc.transform.scale);
      read_opt(t, "offset", tc.transform.offset);
      require(!(tc.standardise && (t.contains("scale") || t.contains("offset"))),
              "transform: standardise excludes scale/offset");
      if (!tc.standardise) tc.transform.validate();
      c.transform = tc;
    }
    if (j.contains("campaign")) {
      const json& cj = j.at("campaign");
      check_keys(cj, {"noise_features", "min_overlap", "floor_slack", "deadline_ms", "decline"}, "campaign");
      read_opt(cj, "noise_features", c.campaign.noise_features);
      read_opt(cj, "min_overlap", c.campaign.min_overlap);
      read_opt(cj, "floor_slack", c.campaign.floor_slack);
      if (cj.contains("deadline_ms")) c.campaign.deadline = std::chrono::milliseconds(cj.at("deadline_ms").get<std::int64_t>());
      read_opt(cj, "decline", c.campaign.decline);
      require(c.campaign.noise_features >= 1, "campaign.noise_features must be >= 1");
      require(c.campaign.floor_slack > 0.0, "campaign.floor_slack must be > 0");
      require(c.campaign.deadline.count() > 0, "campaign.deadline_ms must be > 0");
    }
    if (j.contains("central")) {
      const json& cj = j.at("central");
      check_keys(cj, {"background_size", "sample_count", "explain_limit", "include_noise"}, "central");
      read_opt(cj, "background_size", c.central.shap.background_size);
      read_opt(cj, "sample_count", c.central.shap.sample_count);
      read_opt(cj, "explain_limit", c.central.shap.explain_limit);
      read_opt(cj, "include_noise", c.central.include_noise);
    }
    if (j.contains("compare")) {
      const json& cj = j.at("compare");
      check_keys(cj, {"ranking", "shap_summary"}, "compare");
      c.compare = CompareConfig{cj.at("ranking").get<std::string>(), cj.at("shap_summary").get<std::string>()};
    }
  } catch (const json::exception& ex) {
    fail(ErrorKind::kInvalidArgument, std::string("config: ") + ex.what());
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& ex) {
    fail(ErrorKind::kInvalidArgument, ex.what());
  }
  return parse_config(text);
}

void write_dataset(const std::filesystem::path& dir, const std::vector<ActorDataset>& actors,
                   const MetricSeries& metric) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "actors", ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + (dir / "actors").string());
  json manifest{{"format", "dcontrib-data"}, {"version", 1}, {"metric", "metric.csv"}, {"actors", json::array()}};
  write_text_file(dir / "metric.csv", metric_to_csv(metric));
  for (const auto& a : actors) {
    const std::string file = "actors/" + a.actor_id + ".csv";
    write_text_file(dir / file, actor_to_csv(a));
    std::vector<std::string> shared;
    for (std::size_t c = 0; c < a.cols(); ++c) {
      if (a.shared[c]) shared.push_back(a.feature_names[c]);
    }
    manifest["actors"].push_back({{"id", a.actor_id}, {"file", file}, {"shared", shared}});
  }
  write_text_file(dir / kManifestFile, manifest.dump(2) + "\n");
}

DataManifest load_manifest(const std::filesystem::path& path) {
  DataManifest m;
  const auto base = path.parent_path();
  try {
    const json j = json::parse(read_text_file(path));
    if (j.value("format", "") != "dcontrib-data") fail(ErrorKind::kInvalidArgument, "not a data manifest: " + path.string());
    m.metric = base / j.at("metric").get<std::string>();
    for (const auto& a : j.at("actors")) {
      m.actors.push_back({a.at("id").get<std::string>(), base / a.at("file").get<std::string>(),
                          a.value("shared", std::vector<std::string>{})});
    }
  } catch (const json::exception& ex) {
    fail(ErrorKind::kInvalidArgument, "malformed manifest " + path.string() + ": " + ex.what());
  }
  require(!m.actors.empty(), "manifest lists no actors");
  return m;
}

std::vector<ActorDataset> load_actors(const DataManifest& manifest) {
  std::vector<ActorDataset> out;
  for (const auto& a : manifest.actors) out.push_back(load_actor_csv(a.file, a.id, a.shared));
  return out;
}

namespace {

void ensure_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) fail(ErrorKind::kIo, "cannot create output directory " + dir.string());
}

const std::filesystem::path& require_manifest(const RunConfig& config) {
  if (!config.manifest) fail(ErrorKind::kInvalidArgument, "config has no data.manifest");
  return *config.manifest;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

}  // namespace

IngestSummary cmd_ingest(const RunConfig& config, const Logger& log) {
  if (!config.ingest) fail(ErrorKind::kInvalidArgument, "config has no ingest section");
  const IngestConfig& ic = *config.ingest;
  const RawTable raw = load_csv(ic.input, ic.id_column);

  // Setpoint companions of every measurement never become features.
  std::vector<std::string> non_features = ic.ignore_columns;
  for (const auto& m : ic.measurement_columns) {
    non_features.push_back(m);
    for (const auto& cand : setpoint_column_candidates(m)) {
      if (raw.column_index(cand)) non_features.push_back(cand);
    }
  }

  CleaningReport report;
  const RawTable clean = clean_measurements(raw, ic.column_missing_threshold, ic.drop_rows_with_missing,
                                            ic.measurement_columns, &report);
  std::vector<std::string> kept_measurements;
  for (const auto& m : ic.measurement_columns) {
    if (clean.column_index(m)) kept_measurements.push_back(m);
  }
  if (kept_measurements.empty()) fail(ErrorKind::kInvalidArgument, "every measurement column was dropped");
  require(kept_measurements.size() % ic.parts_per_observation == 0,
          "surviving measurement columns are not a multiple of parts_per_observation");

  SetpointSource setpoints;
  if (ic.setpoints) setpoints = load_setpoint_csv(*ic.setpoints);
  const MetricSeries metric = build_metric_series(clean, kept_measurements, setpoints, ic.parts_per_observation);

  std::vector<std::string> ignored;
  for (const auto& c : non_features) {
    if (clean.column_index(c)) ignored.push_back(c);
  }
  const auto actors = partition_actors(clean, ic.actor_schema, ic.shared_columns, ignored);
  ensure_output_dir(config.output_dir);
  write_dataset(config.output_dir, actors, metric);

  IngestSummary s{report.dropped_columns, report.dropped_rows, clean.rows(), actors.size()};
  log("dropped columns: " + std::to_string(s.dropped_columns.size()) +
      (s.dropped_columns.empty() ? "" : " (" + join(s.dropped_columns) + ")"));
  log("dropped rows: " + std::to_string(s.dropped_rows));
  log("kept rows: " + std::to_string(s.rows) + ", actors: " + std::to_string(s.actors));
  return s;
}

void cmd_synth(const RunConfig& config, const Logger& log) {
  if (!config.synth) fail(ErrorKind::kInvalidArgument, "config has no synth section");
  SyntheticSpec spec = *config.synth;
  spec.seed = config.seed;
  const SyntheticData data = generate_synthetic(spec);
  ensure_output_dir(config.output_dir);
  write_dataset(config.output_dir, data.actors, data.metric);
  std::string truth = "actor_id,weight\n";
  for (const auto& [actor, w] : data.ground_truth) truth += csv_escape(actor) + ',' + format_double(w) + '\n';
  write_text_file(config.output_dir / kGroundTruthFile, truth);
  log("wrote " + std::to_string(data.actors.size()) + " actors, " + std::to_string(data.metric.size()) + " rows");
}

CampaignResult cmd_run_decentralised(const RunConfig& config, const std::string& actor_executable, const Logger& log) {
  const DataManifest manifest = load_manifest(require_manifest(config));
  const MetricSeries metric = load_metric_csv(manifest.metric);
  std::optional<MetricTransform> transform;
  if (config.transform) {
    transform = config.transform->standardise ? standardising_transform(metric) : config.transform->transform;
  }
  std::set<std::string> declining(config.campaign.decline.begin(), config.campaign.decline.end());
  for (const auto& id : declining) {
    const bool known = std::any_of(manifest.actors.begin(), manifest.actors.end(),
                                   [&](const DataManifest::Actor& a) { return a.id == id; });
    require(known, "campaign.decline names an unknown actor: " + id);
  }

  CampaignOptions options;
  options.seed = config.seed;
  options.noise_features = config.campaign.noise_features;
  options.floor_slack = config.campaign.floor_slack;
  options.deadline = config.campaign.deadline;

  std::vector<std::unique_ptr<ActorEndpoint>> owned;
  std::vector<std::unique_ptr<ActorProcess>> processes;
  if (config.transport == TransportKind::kInProcess) {
    for (auto& actor : load_actors(manifest)) {
      ParticipationPolicy policy{config.campaign.min_overlap, declining.count(actor.actor_id) > 0};
      owned.push_back(std::make_unique<InProcessEndpoint>(std::move(actor), config.seed, policy));
    }
  } else {
    require(!actor_executable.empty(), "socket transport needs the actor executable path");
    for (const auto& a : manifest.actors) {
      std::vector<std::string> args{"actor",        "--dataset", a.file.string(), "--actor-id",
                                    a.id,           "--listen",  "127.0.0.1:0",   "--seed",
                                    std::to_string(config.seed), "--min-overlap",
                                    std::to_string(config.campaign.min_overlap)};
      if (declining.count(a.id)) args.push_back("--decline");
      processes.push_back(std::make_unique<ActorProcess>(actor_executable, args));
      owned.push_back(std::make_unique<SocketEndpoint>(a.id, SocketAddress{"127.0.0.1", processes.back()->port()}));
    }
  }
  std::vector<ActorEndpoint*> endpoints;
  for (auto& e : owned) endpoints.push_back(e.get());

  CampaignResult result;
  try {
    result = run_campaign(endpoints, metric, transform, config.hyper, options);
  } catch (const Error& ex) {
    if (ex.kind() == ErrorKind::kCampaign) throw;
    fail(ErrorKind::kCampaign, ex.what());
  }
  ensure_output_dir(config.output_dir);
  write_text_file(config.output_dir / kRankingFile, ranking_to_csv(result.ranking));
  write_text_file(config.output_dir / kCampaignLogFile, campaign_log_text(result));
  for (const auto& e : result.log) {
    if (e.outcome != ActorOutcome::kResponded) {
      log("actor " + e.actor_id + (e.outcome == ActorOutcome::kDeclined ? " declined" : " timed out"));
    }
  }
  for (const auto& e : result.ranking.entries) {
    log(std::to_string(e.rank) + ". " + e.actor_id + " " + format_double(e.total_uncertainty) +
        (e.below_floor ? " (no significant contribution)" : ""));
  }
  return result;
}

void cmd_run_central(const RunConfig& config, const Logger& log) {
  const DataManifest manifest = load_manifest(require_manifest(config));
  const MetricSeries metric = load_metric_csv(manifest.metric);
  std::vector<ActorDataset> actors = load_actors(manifest);
  if (config.central.include_noise) {
    // Same noise features as the decentralised baseline uses for these part ids.
    const auto ids = metric.part_ids();
    actors.push_back(make_noise_actor(ids.size(), config.campaign.noise_features, ids,
                                      mix_seed(config.seed, "noise-features")));
  }
  const CentralModel model = train_central(actors, metric, config.hyper, config.seed);
  ShapOptions shap = config.central.shap;
  shap.seed = config.seed;
  const ShapReport report = explain_central(model, shap);
  const auto summary = aggregate_company(report);
  ensure_output_dir(config.output_dir);
  write_text_file(config.output_dir / kShapValuesFile, shap_values_csv(report));
  write_text_file(config.output_dir / kShapInstancesFile, shap_instances_csv(report));
  write_text_file(config.output_dir / kShapSummaryFile, shap_summary_csv(summary));
  for (const auto& [actor, v] : summary) log(actor + " " + format_double(v));
}

void cmd_compare(const RunConfig& config, const Logger& log) {
  if (!config.compare) fail(ErrorKind::kInvalidArgument, "config has no compare section");
  const ContributionRanking ranking = load_ranking_csv(config.compare->ranking);
  const auto shap = load_shap_summary_csv(config.compare->shap_summary);
  const ComparisonReport report = build_comparison(ranking, shap);
  emit_report(report, config.output_dir);
  log("kendall_tau " + format_double(report.kendall_tau));
  log("spearman_rho " + format_double(report.spearman_rho));
  log("noise_contrast " + format_double(report.noise_contrast));
}

void serve_actor(const ActorModeOptions& options, const std::function<void(std::uint16_t)>& on_listening,
                 const Logger& log) {
  require(!options.actor_id.empty(), "actor mode needs an actor id");
  require(options.max_calls >= 1, "max_calls must be >= 1");
  const ActorDataset actor = load_actor_csv(options.dataset, options.actor_id);
  ActorServer server(options.listen);
  on_listening(server.port());
  for (int i = 0; i < options.max_calls; ++i) {
    server.serve_one([&](const CallForUncertainty& call) {
      std::string why;
      Reply reply = handle_call(actor, call, options.seed, options.policy, &why);
      if (std::holds_alternative<Decline>(reply)) log("declined " + call.call_id + ": " + why);
      return reply;
    });
  }
}

}  // namespace dcontrib
