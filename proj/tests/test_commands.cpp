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

#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "dcontrib/commands.hpp"
#include "dcontrib/error.hpp"
#include "dcontrib/util.hpp"

using namespace dcontrib;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("dcontrib_cmd_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kInvalidArgument;
}

const Logger kQuiet = [](const std::string&) {};

}  // namespace

TEST_CASE("config parsing fills defaults and overrides") {
  const RunConfig c = parse_config(R"({
    "seed": 12, "output_dir": "o", "transport": "sockets",
    "hyper": {"member_count": 3, "log_variance_clamp": [-6, 6]},
    "transform": {"scale": 2.0, "offset": 1.0},
    "campaign": {"min_overlap": 10, "decline": ["x"], "deadline_ms": 500},
    "central": {"explain_limit": 7},
    "data": {"manifest": "d/manifest.json"}
  })");
  CHECK(c.seed == 12);
  CHECK(c.transport == TransportKind::kSockets);
  CHECK(c.hyper.member_count == 3);
  CHECK(c.hyper.hidden_size == 50);
  CHECK(c.hyper.log_variance_min == -6.0);
  CHECK(c.transform->transform.scale == 2.0);
  CHECK(c.campaign.min_overlap == 10);
  CHECK(c.campaign.deadline == std::chrono::milliseconds(500));
  CHECK(c.central.shap.explain_limit == 7);
  CHECK(c.manifest->string() == "d/manifest.json");
}

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK(kind_of([] { parse_config(R"({"sead": 1})"); }) == ErrorKind::kInvalidArgument);
  CHECK(kind_of([] { parse_config(R"({"hyper": {"patience": 3}})"); }) == ErrorKind::kInvalidArgument);
  CHECK(kind_of([] { parse_config(R"({"hyper": {"member_count": 1}})"); }) == ErrorKind::kInvalidArgument);
  CHECK(kind_of([] { parse_config(R"({"transport": "carrier-pigeon"})"); }) == ErrorKind::kInvalidArgument);
  CHECK(kind_of([] { parse_config(R"({"transform": {"scale": 0}})"); }) == ErrorKind::kInvalidArgument);
  CHECK(kind_of([] { parse_config(R"({"synth": {"row_count": 10}})"); }) == ErrorKind::kInvalidArgument);
  CHECK(kind_of([] { parse_config("{not json"); }) == ErrorKind::kInvalidArgument);
  CHECK(kind_of([] { load_config("/nonexistent/config.json"); }) == ErrorKind::kInvalidArgument);
}

TEST_CASE("ingest cleans, aggregates and partitions") {
  TempDir tmp("ingest");
  // m4 is missing in 11 of 12 rows; row o3 misses a kept measurement.
  std::string csv = "id,a.temp,a.speed,b.force,humidity,m1.Actual,m1.Setpoint,m4\n";
  for (int r = 0; r < 12; ++r) {
    csv += "o" + std::to_string(r) + "," + std::to_string(r) + ",1," + std::to_string(2 * r) + ",40," +
           (r == 3 ? "" : "1.1") + ",1.0," + (r == 0 ? "5" : "") + "\n";
  }
  write_text_file(tmp.path / "raw.csv", csv);
  RunConfig c = parse_config(R"({"ingest": {
      "input": "raw.csv", "measurement_columns": ["m1.Actual", "m4"],
      "actor_schema": [{"actor": "a", "columns": ["a.temp", "a.speed"]}, {"actor": "b", "columns": ["b.force"]}],
      "shared_columns": ["humidity"]}})");
  c.ingest->input = tmp.path / "raw.csv";
  c.output_dir = tmp.path / "out";
  std::vector<std::string> lines;
  const IngestSummary s = cmd_ingest(c, [&](const std::string& l) { lines.push_back(l); });
  CHECK(s.dropped_columns == std::vector<std::string>{"m4"});
  CHECK(s.dropped_rows == 1);
  CHECK(s.rows == 11);
  CHECK(s.actors == 2);
  CHECK(lines[0].find("m4") != std::string::npos);

  const DataManifest m = load_manifest(c.output_dir / kManifestFile);
  const auto actors = load_actors(m);
  REQUIRE(actors.size() == 2);
  CHECK(actors[0].feature_names == std::vector<std::string>{"a.temp", "a.speed", "humidity"});
  CHECK(actors[0].shared == std::vector<bool>{false, false, true});
  CHECK(actors[1].rows() == 11);
  const MetricSeries metric = load_metric_csv(m.metric);
  CHECK(metric.size() == 11);
  CHECK(metric.entries()[0].value == doctest::Approx(0.1));
}

TEST_CASE("ingest of clean input reports zero drops") {
  TempDir tmp("ingest_clean");
  write_text_file(tmp.path / "raw.csv", "id,x,m\nr1,1,2\nr2,2,3\n");
  RunConfig c = parse_config(R"({"ingest": {"input": "x", "measurement_columns": ["m"],
      "actor_schema": [{"actor": "only", "columns": ["x"]}]}})");
  c.ingest->input = tmp.path / "raw.csv";
  write_text_file(tmp.path / "sp.csv", "measurement,setpoint\nm,2\n");
  c.ingest->setpoints = tmp.path / "sp.csv";
  c.output_dir = tmp.path / "out";
  const IngestSummary s = cmd_ingest(c, kQuiet);
  CHECK(s.dropped_columns.empty());
  CHECK(s.dropped_rows == 0);
}

TEST_CASE("ingest schema problems are invalid arguments") {
  TempDir tmp("ingest_bad");
  write_text_file(tmp.path / "raw.csv", "key,x,m\nr1,1,2\n");
  RunConfig c = parse_config(R"({"ingest": {"input": "x", "measurement_columns": ["m"],
      "actor_schema": [{"actor": "only", "columns": ["x"]}]}})");
  c.ingest->input = tmp.path / "raw.csv";
  c.output_dir = tmp.path / "out";
  CHECK(kind_of([&] { cmd_ingest(c, kQuiet); }) == ErrorKind::kInvalidArgument);
}

TEST_CASE("synth writes one file per actor plus ground truth, deterministically") {
  TempDir tmp("synth");
  RunConfig c = parse_config(R"({"seed": 7, "synth": {"row_count": 250}})");
  c.output_dir = tmp.path / "a";
  cmd_synth(c, kQuiet);
  c.output_dir = tmp.path / "b";
  cmd_synth(c, kQuiet);
  int files = 0;
  for (const auto& e : fs::directory_iterator(tmp.path / "a" / "actors")) {
    ++files;
    CHECK(read_text_file(e.path()) == read_text_file(tmp.path / "b" / "actors" / e.path().filename()));
  }
  CHECK(files == 4);
  CHECK(read_text_file(tmp.path / "a" / kGroundTruthFile) == "actor_id,weight\nactor1,3\nactor2,2\nactor3,1\nactor4,0.5\n");
  CHECK(read_text_file(tmp.path / "a" / "metric.csv") == read_text_file(tmp.path / "b" / "metric.csv"));
}

TEST_CASE("campaign with every actor declining is a campaign failure") {
  TempDir tmp("all_decline");
  RunConfig s = parse_config(R"({"seed": 1, "synth": {"row_count": 250, "actor_count": 2, "signal_weights": [1, 1]}})");
  s.output_dir = tmp.path / "data";
  cmd_synth(s, kQuiet);
  RunConfig c = parse_config(R"({"campaign": {"decline": ["actor1", "actor2"]}})");
  c.manifest = tmp.path / "data" / kManifestFile;
  c.output_dir = tmp.path / "out";
  CHECK(kind_of([&] { cmd_run_decentralised(c, "", kQuiet); }) == ErrorKind::kCampaign);
  c.campaign.decline = {"nobody"};
  CHECK(kind_of([&] { cmd_run_decentralised(c, "", kQuiet); }) == ErrorKind::kInvalidArgument);
}

TEST_CASE("central run on a constant target attributes nothing") {
  TempDir tmp("central_const");
  RunConfig s = parse_config(R"({"seed": 2, "synth": {"row_count": 300, "actor_count": 2, "signal_weights": [1, 1]}})");
  s.output_dir = tmp.path / "data";
  cmd_synth(s, kQuiet);
  std::string metric = "part_id,value\n";
  for (const auto& id : load_metric_csv(tmp.path / "data" / "metric.csv").part_ids()) metric += id + ",3.5\n";
  write_text_file(tmp.path / "data" / "metric.csv", metric);
  RunConfig c = parse_config(R"({"hyper": {"max_epochs": 1000, "patience_epochs": 200, "learning_rate": 0.01,
      "batch_size": 32, "hidden_size": 16}, "central": {"explain_limit": 5, "background_size": 20, "sample_count": 64}})");
  c.manifest = tmp.path / "data" / kManifestFile;
  c.output_dir = tmp.path / "out";
  cmd_run_central(c, kQuiet);
  // part_id repeats once per feature, so read the rows as text.
  std::istringstream lines(read_text_file(tmp.path / "out" / kShapValuesFile));
  std::string line;
  std::getline(lines, line);
  int rows = 0;
  while (std::getline(lines, line)) {
    double phi = 0.0;
    REQUIRE(parse_double(line.substr(line.rfind(',') + 1), phi));
    CHECK(std::abs(phi) < 1e-2);
    ++rows;
  }
  CHECK(rows == 5 * (2 * 4 + 5));
}
