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

#include "dcontrib/dcontrib.h"

#include <cstring>
#include <exception>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "dcontrib/commands.hpp"
#include "dcontrib/ensemble.hpp"
#include "dcontrib/error.hpp"
#include "dcontrib/evaluation.hpp"
#include "hyper_json.hpp"

struct dc_config {
  dcontrib::RunConfig config;
};

struct dc_ensemble {
  dcontrib::Ensemble ensemble;
  std::optional<dcontrib::ActorDataset> training_data;  // absent after load
};

namespace {

thread_local std::string g_last_error;

dc_status status_of(dcontrib::ErrorKind kind) {
  using dcontrib::ErrorKind;
  switch (kind) {
    case ErrorKind::kInvalidArgument: return DC_ERR_INVALID_ARGUMENT;
    case ErrorKind::kParse: return DC_ERR_PARSE;
    case ErrorKind::kDomain: return DC_ERR_DOMAIN;
    case ErrorKind::kIo: return DC_ERR_IO;
    case ErrorKind::kProtocol: return DC_ERR_PROTOCOL;
    case ErrorKind::kTraining: return DC_ERR_TRAINING;
    case ErrorKind::kCampaign: return DC_ERR_CAMPAIGN;
  }
  return DC_ERR_INTERNAL;
}

template <typename F>
dc_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return DC_OK;
  } catch (const dcontrib::Error& ex) {
    g_last_error = ex.what();
    return status_of(ex.kind());
  } catch (const std::exception& ex) {
    g_last_error = ex.what();
    return DC_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return DC_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) dcontrib::fail(dcontrib::ErrorKind::kInvalidArgument, std::string(what) + " is null");
}

dcontrib::Logger logger_of(dc_log_fn log, void* user) {
  return [log, user](const std::string& line) {
    if (log != nullptr) log(line.c_str(), user);
  };
}

}  // namespace

extern "C" {

const char* dc_version(void) { return "0.1.0"; }

const char* dc_last_error_message(void) { return g_last_error.c_str(); }

const char* dc_status_name(dc_status status) {
  switch (status) {
    case DC_OK: return "ok";
    case DC_ERR_INVALID_ARGUMENT: return "invalid argument";
    case DC_ERR_PARSE: return "parse error";
    case DC_ERR_DOMAIN: return "domain error";
    case DC_ERR_IO: return "i/o error";
    case DC_ERR_PROTOCOL: return "protocol error";
    case DC_ERR_TRAINING: return "training failure";
    case DC_ERR_CAMPAIGN: return "campaign failure";
    case DC_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

int dc_status_exit_code(dc_status status) {
  switch (status) {
    case DC_OK: return 0;
    case DC_ERR_INVALID_ARGUMENT:
    case DC_ERR_PARSE:
    case DC_ERR_DOMAIN:
    case DC_ERR_IO:
    case DC_ERR_PROTOCOL: return 2;
    case DC_ERR_TRAINING:
    case DC_ERR_CAMPAIGN: return 3;
    default: return 1;
  }
}

dc_status dc_config_load(const char* path, dc_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new dc_config{dcontrib::load_config(path)};
  });
}

dc_status dc_config_parse(const char* json_text, dc_config** out) {
  return guarded([&] {
    need(json_text, "json_text");
    need(out, "out");
    *out = nullptr;
    *out = new dc_config{dcontrib::parse_config(json_text)};
  });
}

dc_status dc_config_set_seed(dc_config* config, uint64_t seed) {
  return guarded([&] {
    need(config, "config");
    config->config.seed = seed;
  });
}

dc_status dc_config_set_transport(dc_config* config, const char* transport) {
  return guarded([&] {
    need(config, "config");
    need(transport, "transport");
    config->config.transport = dcontrib::parse_transport(transport);
  });
}

dc_status dc_config_set_output_dir(dc_config* config, const char* dir) {
  return guarded([&] {
    need(config, "config");
    need(dir, "dir");
    config->config.output_dir = dir;
  });
}

dc_status dc_config_set_manifest(dc_config* config, const char* manifest_path) {
  return guarded([&] {
    need(config, "config");
    need(manifest_path, "manifest_path");
    config->config.manifest = std::filesystem::path(manifest_path);
  });
}

void dc_config_free(dc_config* config) { delete config; }

dc_status dc_run_ingest(const dc_config* config, dc_log_fn log, void* user) {
  return guarded([&] {
    need(config, "config");
    dcontrib::cmd_ingest(config->config, logger_of(log, user));
  });
}

dc_status dc_run_synth(const dc_config* config, dc_log_fn log, void* user) {
  return guarded([&] {
    need(config, "config");
    dcontrib::cmd_synth(config->config, logger_of(log, user));
  });
}

dc_status dc_run_decentralised(const dc_config* config, const char* actor_executable, dc_log_fn log, void* user) {
  return guarded([&] {
    need(config, "config");
    dcontrib::cmd_run_decentralised(config->config, actor_executable ? actor_executable : "",
                                    logger_of(log, user));
  });
}

dc_status dc_run_central(const dc_config* config, dc_log_fn log, void* user) {
  return guarded([&] {
    need(config, "config");
    dcontrib::cmd_run_central(config->config, logger_of(log, user));
  });
}

dc_status dc_run_compare(const dc_config* config, dc_log_fn log, void* user) {
  return guarded([&] {
    need(config, "config");
    dcontrib::cmd_compare(config->config, logger_of(log, user));
  });
}

dc_status dc_actor_serve(const dc_actor_options* options, dc_listening_fn on_listening, dc_log_fn log, void* user) {
  return guarded([&] {
    need(options, "options");
    need(options->dataset, "options->dataset");
    need(options->actor_id, "options->actor_id");
    need(options->listen, "options->listen");
    dcontrib::ActorModeOptions o;
    o.dataset = options->dataset;
    o.actor_id = options->actor_id;
    o.listen = dcontrib::parse_address(options->listen);
    o.seed = options->seed;
    o.policy.min_overlap = options->min_overlap;
    o.policy.decline = options->decline != 0;
    o.max_calls = options->max_calls > 0 ? options->max_calls : 1;
    dcontrib::serve_actor(
        o,
        [&](std::uint16_t port) {
          if (on_listening != nullptr) on_listening(port, user);
        },
        logger_of(log, user));
  });
}

dc_status dc_quality_kpi(const double* actuals, const double* setpoints, size_t parts, size_t types, double* out) {
  return guarded([&] {
    need(out, "out");
    need(actuals, "actuals");
    need(setpoints, "setpoints");
    dcontrib::MeasurementBlock block;
    block.parts = parts;
    block.types = types;
    block.actuals.assign(actuals, actuals + parts * types);
    block.setpoints.assign(setpoints, setpoints + parts * types);
    *out = dcontrib::aggregate_quality(block);
  });
}

dc_status dc_kendall_tau(const double* a, const double* b, size_t n, double* out) {
  return guarded([&] {
    need(a, "a");
    need(b, "b");
    need(out, "out");
    *out = dcontrib::kendall_tau(std::span<const double>(a, n), std::span<const double>(b, n));
  });
}

dc_status dc_spearman_rho(const double* a, const double* b, size_t n, double* out) {
  return guarded([&] {
    need(a, "a");
    need(b, "b");
    need(out, "out");
    *out = dcontrib::spearman_rho(std::span<const double>(a, n), std::span<const double>(b, n));
  });
}

dc_status dc_ensemble_train(const double* features, size_t rows, size_t cols, const double* targets,
                            const char* hyper_json, uint64_t seed, dc_ensemble** out) {
  return guarded([&] {
    need(features, "features");
    need(targets, "targets");
    need(out, "out");
    *out = nullptr;
    dcontrib::require(rows > 0 && cols > 0, "rows and cols must be positive");
    dcontrib::EnsembleHyper hyper;
    if (hyper_json != nullptr) {
      try {
        hyper = dcontrib::detail::hyper_from_json(nlohmann::json::parse(hyper_json), hyper, true);
      } catch (const nlohmann::json::exception& ex) {
        dcontrib::fail(dcontrib::ErrorKind::kInvalidArgument, std::string("hyper: ") + ex.what());
      }
    }
    hyper.validate();
    dcontrib::ActorDataset data;
    data.actor_id = "capi";
    std::vector<dcontrib::MetricEntry> metric;
    data.features.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (size_t r = 0; r < rows; ++r) {
      data.part_ids.push_back("r" + std::to_string(r));
      metric.push_back({data.part_ids.back(), targets[r]});
      for (size_t c = 0; c < cols; ++c) {
        data.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = features[r * cols + c];
      }
    }
    for (size_t c = 0; c < cols; ++c) data.feature_names.push_back("x" + std::to_string(c));
    data.shared.assign(cols, false);
    auto ens = dcontrib::train_ensemble(data, dcontrib::MetricSeries(std::move(metric)), hyper, seed);
    *out = new dc_ensemble{std::move(ens), std::move(data)};
  });
}

dc_status dc_ensemble_predict(const dc_ensemble* ensemble, const double* x, size_t cols, double* mean,
                              double* knowledge_variance, double* data_variance, double* total_variance) {
  return guarded([&] {
    need(ensemble, "ensemble");
    need(x, "x");
    const auto s = dcontrib::predict(ensemble->ensemble, std::span<const double>(x, cols));
    if (mean) *mean = s.mean;
    if (knowledge_variance) *knowledge_variance = s.knowledge_variance;
    if (data_variance) *data_variance = s.data_variance;
    if (total_variance) *total_variance = s.total_variance;
  });
}

dc_status dc_ensemble_validation_uncertainty(const dc_ensemble* ensemble, double* out) {
  return guarded([&] {
    need(ensemble, "ensemble");
    need(out, "out");
    if (!ensemble->training_data) {
      dcontrib::fail(dcontrib::ErrorKind::kInvalidArgument, "training data is not held by a loaded ensemble");
    }
    *out = dcontrib::total_uncertainty(ensemble->ensemble, *ensemble->training_data);
  });
}

dc_status dc_ensemble_save(const dc_ensemble* ensemble, const char* path) {
  return guarded([&] {
    need(ensemble, "ensemble");
    need(path, "path");
    dcontrib::save_ensemble(ensemble->ensemble, path);
  });
}

dc_status dc_ensemble_load(const char* path, dc_ensemble** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new dc_ensemble{dcontrib::load_ensemble(path), std::nullopt};
  });
}

void dc_ensemble_free(dc_ensemble* ensemble) { delete ensemble; }

}  // extern "C"
