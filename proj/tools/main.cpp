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

// dcontrib command-line front end. Talks to the library through the C API only.

#include <unistd.h>

#include <climits>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dcontrib/dcontrib.h"

namespace {

void print_line(const char* line, void*) { std::cout << line << '\n'; }

std::string self_executable() {
  char buf[PATH_MAX];
  const ssize_t n = ::readlink("/proc/self/exe", buf, sizeof(buf) - 1);
  if (n <= 0) return {};
  return std::string(buf, static_cast<std::size_t>(n));
}

int report(dc_status status) {
  if (status != DC_OK) {
    std::cerr << "error: " << dc_status_name(status) << ": " << dc_last_error_message() << '\n';
  }
  return dc_status_exit_code(status);
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> transport;
  std::optional<std::string> out;
  std::optional<std::string> manifest;
};

void add_common(CLI::App* sub, Common& c, bool with_transport) {
  sub->add_option("-c,--config", c.config, "JSON run configuration")->required();
  sub->add_option("--seed", c.seed, "overrides the configured seed");
  sub->add_option("-o,--out", c.out, "overrides the configured output directory");
  sub->add_option("--manifest", c.manifest, "overrides data.manifest");
  if (with_transport) {
    sub->add_option("--transport", c.transport, "in-process or sockets")
        ->check(CLI::IsMember({"in-process", "sockets"}));
  }
}

dc_status load(const Common& c, dc_config** cfg) {
  dc_status s = dc_config_load(c.config.c_str(), cfg);
  if (s != DC_OK) return s;
  if (c.seed) s = dc_config_set_seed(*cfg, *c.seed);
  if (s == DC_OK && c.transport) s = dc_config_set_transport(*cfg, c.transport->c_str());
  if (s == DC_OK && c.out) s = dc_config_set_output_dir(*cfg, c.out->c_str());
  if (s == DC_OK && c.manifest) s = dc_config_set_manifest(*cfg, c.manifest->c_str());
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rank data contributions by ensemble uncertainty"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(dc_version()));

  Common common;
  CLI::App* ingest = app.add_subcommand("ingest", "clean a wide CSV and split it into per-actor datasets");
  add_common(ingest, common, false);
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset with known contributions");
  add_common(synth, common, false);
  CLI::App* dec = app.add_subcommand("run-decentralised", "run an uncertainty campaign over all actors");
  add_common(dec, common, true);
  CLI::App* central = app.add_subcommand("run-central", "train the pooled model and explain it with KernelSHAP");
  add_common(central, common, false);
  CLI::App* compare = app.add_subcommand("compare", "compare a campaign ranking against SHAP importances");
  add_common(compare, common, false);

  dc_actor_options actor_opts{};
  std::string dataset, actor_id, listen = "127.0.0.1:0";
  std::uint64_t actor_seed = 0;
  std::size_t min_overlap = 50;
  bool decline = false;
  int max_calls = 1;
  CLI::App* actor = app.add_subcommand("actor", "serve one actor's dataset over TCP");
  actor->add_option("--dataset", dataset, "actor CSV")->required();
  actor->add_option("--actor-id", actor_id, "actor identifier")->required();
  actor->add_option("--listen", listen, "host:port, port 0 picks a free one");
  actor->add_option("--seed", actor_seed, "campaign seed");
  actor->add_option("--min-overlap", min_overlap, "decline below this many shared part ids");
  actor->add_flag("--decline", decline, "decline every call");
  actor->add_option("--max-calls", max_calls, "calls to answer before exiting")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*actor) {
    actor_opts.dataset = dataset.c_str();
    actor_opts.actor_id = actor_id.c_str();
    actor_opts.listen = listen.c_str();
    actor_opts.seed = actor_seed;
    actor_opts.min_overlap = min_overlap;
    actor_opts.decline = decline ? 1 : 0;
    actor_opts.max_calls = max_calls;
    auto on_listening = [](std::uint16_t port, void*) {
      std::printf("LISTENING %u\n", static_cast<unsigned>(port));
      std::fflush(stdout);
    };
    auto to_stderr = [](const char* line, void*) { std::cerr << line << '\n'; };
    return report(dc_actor_serve(&actor_opts, on_listening, to_stderr, nullptr));
  }

  dc_config* cfg = nullptr;
  dc_status status = load(common, &cfg);
  if (status == DC_OK) {
    if (*ingest) status = dc_run_ingest(cfg, print_line, nullptr);
    else if (*synth) status = dc_run_synth(cfg, print_line, nullptr);
    else if (*dec) status = dc_run_decentralised(cfg, self_executable().c_str(), print_line, nullptr);
    else if (*central) status = dc_run_central(cfg, print_line, nullptr);
    else if (*compare) status = dc_run_compare(cfg, print_line, nullptr);
  }
  dc_config_free(cfg);
  return report(status);
}
