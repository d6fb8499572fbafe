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

// Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero
// when any criterion fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dcontrib/baseline.hpp"
#include "dcontrib/commands.hpp"
#include "dcontrib/dataset.hpp"
#include "dcontrib/ensemble.hpp"
#include "dcontrib/evaluation.hpp"
#include "dcontrib/network.hpp"
#include "dcontrib/protocol.hpp"
#include "dcontrib/transport.hpp"
#include "dcontrib/util.hpp"

#ifndef DCONTRIB_CLI_PATH
#define DCONTRIB_CLI_PATH ""
#endif

namespace fs = std::filesystem;
using namespace dcontrib;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Seconds = std::chrono::duration<double>;

double elapsed(std::chrono::steady_clock::time_point t0) {
  return Seconds(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

// 1 ------------------------------------------------------------------------

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> in_d(1, 5), hid_d(1, 8), rows_d(1, 16);
  std::normal_distribution<double> normal(0.0, 1.0);
  const LogVarianceClamp clamp{-10.0, 10.0};
  double worst = 0.0;
  for (int layout_i = 0; layout_i < 50; ++layout_i) {
    const Layout layout{static_cast<std::size_t>(in_d(rng)), static_cast<std::size_t>(hid_d(rng))};
    Member m = init_member(layout, rng());
    const int rows = rows_d(rng);
    Eigen::MatrixXd x(rows, static_cast<Eigen::Index>(layout.inputs));
    std::vector<double> y(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = normal(rng);
      y[static_cast<std::size_t>(r)] = normal(rng);
    }
    Gradients g;
    loss_and_gradient(m, x, y, clamp, nullptr, &g);
    const std::vector<double> analytic = g.flat();
    std::vector<double> theta = m.parameters();
    const double h = 1e-5;
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t p = 0; p < theta.size(); ++p) {
      const double keep = theta[p];
      theta[p] = keep + h;
      m.set_parameters(theta);
      const double up = loss_and_gradient(m, x, y, clamp, nullptr, nullptr);
      theta[p] = keep - h;
      m.set_parameters(theta);
      const double down = loss_and_gradient(m, x, y, clamp, nullptr, nullptr);
      theta[p] = keep;
      const double numeric = (up - down) / (2 * h);
      diff2 += (numeric - analytic[p]) * (numeric - analytic[p]);
      a2 += analytic[p] * analytic[p];
      n2 += numeric * numeric;
    }
    m.set_parameters(theta);
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    worst = std::max(worst, std::sqrt(diff2) / denom);
  }
  const double secs = elapsed(t0);
  return {worst < 1e-4 && secs < 10.0,
          "50 layouts, worst relative error " + fmt(worst) + ", " + fmt(secs, 3) + " s"};
}

// 2 ------------------------------------------------------------------------

Outcome mixture_variance() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(202);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> var_d(0.05, 3.0);
  const int sizes[] = {2, 5, 10};
  const int draws = 1'000'000;
  int failures = 0;
  double worst_z = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int m = sizes[t % 3];
    std::vector<double> mu(static_cast<std::size_t>(m)), var(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      mu[static_cast<std::size_t>(i)] = 2.0 * normal(rng);
      var[static_cast<std::size_t>(i)] = var_d(rng);
    }
    const PredictiveSummary s = combine_members(mu, var);
    std::vector<double> sd(var.size());
    for (std::size_t i = 0; i < var.size(); ++i) sd[i] = std::sqrt(var[i]);
    std::uniform_int_distribution<int> pick(0, m - 1);
    // Welford mean/M2 plus raw sums for the fourth central moment.
    std::vector<double> sample(static_cast<std::size_t>(draws));
    double mean = 0.0;
    for (int d = 0; d < draws; ++d) {
      const auto c = static_cast<std::size_t>(pick(rng));
      sample[static_cast<std::size_t>(d)] = mu[c] + sd[c] * normal(rng);
      mean += sample[static_cast<std::size_t>(d)];
    }
    mean /= draws;
    double m2 = 0.0, m4 = 0.0;
    for (double v : sample) {
      const double e = (v - mean) * (v - mean);
      m2 += e;
      m4 += e * e;
    }
    const double var_hat = m2 / (draws - 1);
    const double se = std::sqrt((m4 / draws - (m2 / draws) * (m2 / draws)) / draws);
    const double z = std::abs(var_hat - s.total_variance) / se;
    worst_z = std::max(worst_z, z);
    if (z > 3.0) ++failures;
  }
  const double secs = elapsed(t0);
  return {failures == 0 && secs < 60.0, "100 mixtures, worst |z| " + fmt(worst_z, 3) + ", outside band " +
                                            std::to_string(failures) + ", " + fmt(secs, 3) + " s"};
}

// 3 ------------------------------------------------------------------------

Outcome quality_desk_checks() {
  const double perfect = aggregate_quality({2, 2, {1.0, 2.0, 3.0, 4.0}, {1.0, 2.0, 3.0, 4.0}});
  const double tenth = aggregate_quality({1, 2, {1.1, 0.9}, {1.0, 1.0}});
  const double two = aggregate_quality({2, 1, {2.0, 0.0}, {1.0, 1.0}});
  // 1.1 and 0.9 have no exact binary form; allow a few ulps on that case only.
  const bool ok = perfect == 0.0 && std::abs(tenth - 0.1) <= 4 * std::numeric_limits<double>::epsilon() * 0.1 &&
                  two == 2.0;
  return {ok, "values " + format_double(perfect) + ", " + format_double(tenth) + ", " + format_double(two)};
}

// 4 ------------------------------------------------------------------------

BatchModel random_model(std::size_t d, std::mt19937_64& rng) {
  const Member m = init_member({d, 6}, rng());
  return [m](const Eigen::MatrixXd& x) {
    const Eigen::MatrixXd out = forward_batch(m, x, {-10.0, 10.0});
    return Eigen::VectorXd(out.col(0));
  };
}

Outcome kernel_shap_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> d_d(2, 8);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst_err = 0.0, worst_acc = 0.0;
  for (int t = 0; t < 20; ++t) {
    const auto d = static_cast<std::size_t>(d_d(rng));
    const BatchModel model = random_model(d, rng);
    Eigen::MatrixXd background(25, static_cast<Eigen::Index>(d));
    for (Eigen::Index r = 0; r < background.rows(); ++r) {
      for (Eigen::Index c = 0; c < background.cols(); ++c) background(r, c) = normal(rng);
    }
    std::vector<double> x(d);
    for (auto& v : x) v = 1.5 * normal(rng);
    const ShapExplanation k = kernel_shap(model, x, background, 4096, rng());
    const ShapExplanation e = exact_shapley(model, x, background);
    double sum = k.base_value;
    for (std::size_t j = 0; j < d; ++j) {
      worst_err = std::max(worst_err, std::abs(k.phi[j] - e.phi[j]));
      sum += k.phi[j];
    }
    worst_acc = std::max(worst_acc, std::abs(sum - k.prediction));
  }
  const double secs = elapsed(t0);
  return {worst_err < 1e-2 && worst_acc < 1e-3 && secs < 300.0,
          "20 models, max |kernel - exact| " + fmt(worst_err) + ", max additivity gap " + fmt(worst_acc) + ", " +
              fmt(secs, 3) + " s"};
}

// 5, 6, 7 ------------------------------------------------------------------

constexpr int kSeeds = 10;
constexpr int kRows = 5000;  // upper end of desk scale; weak actors need the rows

EnsembleHyper fixture_hyper() {
  EnsembleHyper h;
  h.member_count = 5;
  h.max_epochs = 500;
  return h;
}

SyntheticSpec fixture_spec(std::uint64_t seed, double rho) {
  SyntheticSpec s;
  s.actor_count = 4;
  s.features_per_actor = 4;
  s.signal_weights = {3.0, 2.0, 1.0, 0.5};
  s.row_count = kRows;
  s.seed = seed;
  s.cross_correlation = rho;
  if (rho > 0.0) s.correlated_actors = {3};  // most downstream actor
  return s;
}

ContributionRanking decentralised(const SyntheticData& data, std::uint64_t seed) {
  std::vector<std::unique_ptr<ActorEndpoint>> owned;
  std::vector<ActorEndpoint*> endpoints;
  for (const auto& a : data.actors) {
    owned.push_back(std::make_unique<InProcessEndpoint>(a, seed));
    endpoints.push_back(owned.back().get());
  }
  CampaignOptions options;
  options.seed = seed;
  return run_campaign(endpoints, data.metric, std::nullopt, fixture_hyper(), options).ranking;
}

std::vector<std::pair<std::string, double>> centralised(const SyntheticData& data, std::uint64_t seed) {
  std::vector<ActorDataset> actors = data.actors;
  const auto ids = data.metric.part_ids();
  actors.push_back(make_noise_actor(ids.size(), 5, ids, mix_seed(seed, "noise-features")));
  const CentralModel model = train_central(actors, data.metric, fixture_hyper(), seed);
  ShapOptions shap;
  shap.seed = seed;
  shap.explain_limit = 50;
  shap.background_size = 50;
  return aggregate_company(explain_central(model, shap));
}

int rank_of(const ContributionRanking& r, const std::string& id) {
  for (const auto& e : r.entries) {
    if (e.actor_id == id) return e.rank;
  }
  return -1;
}

struct FixtureRuns {
  std::vector<ContributionRanking> plain;
  std::vector<double> plain_secs;
  std::vector<ContributionRanking> correlated;
  std::vector<std::vector<std::pair<std::string, double>>> shap;
};

FixtureRuns& fixture_runs(bool need_correlated, bool need_shap) {
  static FixtureRuns runs;
  if (runs.plain.empty()) {
    for (int s = 0; s < kSeeds; ++s) {
      const auto t0 = std::chrono::steady_clock::now();
      runs.plain.push_back(decentralised(generate_synthetic(fixture_spec(1000 + s, 0.0)), 1000 + s));
      runs.plain_secs.push_back(elapsed(t0));
      std::fprintf(stderr, "  seed %d: plain campaign %.1f s\n", s, runs.plain_secs.back());
    }
  }
  if (need_correlated && runs.correlated.empty()) {
    for (int s = 0; s < kSeeds; ++s) {
      runs.correlated.push_back(decentralised(generate_synthetic(fixture_spec(1000 + s, 0.8)), 1000 + s));
      std::fprintf(stderr, "  seed %d: correlated campaign done\n", s);
    }
  }
  if (need_shap && runs.shap.empty()) {
    for (int s = 0; s < kSeeds; ++s) {
      runs.shap.push_back(centralised(generate_synthetic(fixture_spec(1000 + s, 0.0)), 1000 + s));
      std::fprintf(stderr, "  seed %d: central SHAP done\n", s);
    }
  }
  return runs;
}

Outcome noise_floor() {
  const FixtureRuns& runs = fixture_runs(false, false);
  int hits = 0;
  std::string ranks;
  double secs = 0.0;
  for (std::size_t s = 0; s < runs.plain.size(); ++s) {
    const auto& r = runs.plain[s];
    const bool last = r.entries.back().actor_id == kNoiseActorId;
    hits += last ? 1 : 0;
    ranks += (ranks.empty() ? "" : " ") + std::to_string(rank_of(r, kNoiseActorId));
    secs += runs.plain_secs[s];
  }
  return {hits >= 9 && secs < 900.0, "noise ranked last in " + std::to_string(hits) + "/10 seeds (noise ranks: " +
                                         ranks + "), " + fmt(secs, 4) + " s"};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome ranking_agreement() {
  const FixtureRuns& runs = fixture_runs(false, true);
  std::vector<double> taus;
  for (int s = 0; s < kSeeds; ++s) {
    taus.push_back(build_comparison(runs.plain[s], runs.shap[s]).kendall_tau);
  }
  const double med = median(taus);
  std::string list;
  for (double t : taus) list += (list.empty() ? "" : " ") + fmt(t, 3);
  return {med >= 0.6, "median Kendall tau " + fmt(med, 3) + " (" + list + ")"};
}

Outcome multicollinearity_probe() {
  const FixtureRuns& runs = fixture_runs(true, false);
  int improved = 0;
  std::string moves;
  for (int s = 0; s < kSeeds; ++s) {
    const int before = rank_of(runs.plain[s], "actor4");
    const int after = rank_of(runs.correlated[s], "actor4");
    improved += after < before ? 1 : 0;
    moves += (moves.empty() ? "" : " ") + std::to_string(before) + "->" + std::to_string(after);
  }
  return {improved > kSeeds / 2, "actor4 rank improved in " + std::to_string(improved) + "/10 seeds (" + moves + ")"};
}

// 8 ------------------------------------------------------------------------

Outcome protocol_privacy() {
  std::vector<std::string> problems;
  // Round trip of every variant.
  CallForUncertainty call{"c-1", MetricSeries({{"p1", 0.25}, {"p2", -1.5}, {"p3", 1e-300}}), fixture_hyper(),
                          std::chrono::milliseconds(1234)};
  const std::vector<Message> messages{call, UncertaintyResponse{"a", "c-1", 0.123456789012345678},
                                      Decline{"b", "c-1"}};
  for (const auto& m : messages) {
    if (decode_message(encode_message(m)) != m) problems.push_back("round trip of kind " + std::to_string(m.index()));
  }

  const std::string exe = DCONTRIB_CLI_PATH;
  if (exe.empty() || !fs::exists(exe)) {
    return {false, "CLI executable not found for the socket campaign"};
  }
  SyntheticSpec spec;
  spec.row_count = 600;
  spec.seed = 88;
  const SyntheticData data = generate_synthetic(spec);
  const fs::path dir = fs::temp_directory_path() / ("dcontrib_accept8_" + std::to_string(::getpid()));
  write_dataset(dir, data.actors, data.metric);

  RunConfig config;
  config.seed = 88;
  config.manifest = dir / kManifestFile;
  config.hyper.max_epochs = 40;
  config.hyper.patience_epochs = 10;
  config.campaign.decline = {"actor2"};
  config.output_dir = dir / "in-process";
  const Logger quiet = [](const std::string&) {};
  const CampaignResult local = cmd_run_decentralised(config, exe, quiet);
  config.transport = TransportKind::kSockets;
  config.output_dir = dir / "sockets";
  const CampaignResult remote = cmd_run_decentralised(config, exe, quiet);

  // Per participating actor: exactly one frame carrying a scalar, and no
  // actor-to-coordinator frame with an array payload.
  std::map<std::string, int> scalar_frames;
  for (const auto& f : remote.transcript) {
    if (f.to_actor) continue;
    if (f.frame.find('[') != std::string::npos) problems.push_back("array in reply from " + f.endpoint);
    const Reply r = decode_reply(f.frame);
    if (std::holds_alternative<UncertaintyResponse>(r)) ++scalar_frames[f.endpoint];
  }
  for (const auto& a : data.actors) {
    const int expected = a.actor_id == "actor2" ? 0 : 1;
    if (scalar_frames[a.actor_id] != expected) {
      problems.push_back(a.actor_id + " sent " + std::to_string(scalar_frames[a.actor_id]) + " scalar frames");
    }
  }
  const bool same = read_text_file(dir / "in-process" / kRankingFile) == read_text_file(dir / "sockets" / kRankingFile);
  if (!same || !(local.ranking == remote.ranking)) problems.push_back("transports disagree");
  fs::remove_all(dir);

  const auto senders = std::count_if(scalar_frames.begin(), scalar_frames.end(), [](const auto& kv) { return kv.second > 0; });
  std::string detail = "3 variants round-tripped, " + std::to_string(senders) +
                       " actors with scalar frames, rankings identical across transports";
  if (!problems.empty()) {
    detail.clear();
    for (const auto& p : problems) detail += (detail.empty() ? "" : "; ") + p;
  }
  return {problems.empty(), detail};
}

// 9 ------------------------------------------------------------------------

Outcome determinism() {
  SyntheticSpec spec;
  spec.row_count = 600;
  spec.seed = 99;
  const SyntheticData data = generate_synthetic(spec);
  const fs::path dir = fs::temp_directory_path() / ("dcontrib_accept9_" + std::to_string(::getpid()));
  write_dataset(dir, data.actors, data.metric);
  RunConfig config;
  config.seed = 99;
  config.manifest = dir / kManifestFile;
  config.hyper.max_epochs = 40;
  config.hyper.patience_epochs = 10;
  const Logger quiet = [](const std::string&) {};
  config.output_dir = dir / "a";
  cmd_run_decentralised(config, "", quiet);
  config.output_dir = dir / "b";
  cmd_run_decentralised(config, "", quiet);
  const std::string a = read_text_file(dir / "a" / kRankingFile);
  const std::string b = read_text_file(dir / "b" / kRankingFile);
  fs::remove_all(dir);
  return {a == b && !a.empty(), a == b ? "ranking CSVs byte-identical (" + std::to_string(a.size()) + " bytes)"
                                       : "ranking CSVs differ"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, gradient_check},    {2, mixture_variance},  {3, quality_desk_checks},
      {4, kernel_shap_oracle}, {5, noise_floor},       {6, ranking_agreement},
      {7, multicollinearity_probe}, {8, protocol_privacy}, {9, determinism}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& ex) {
      o = {false, std::string("threw: ") + ex.what()};
    }
    std::printf("criterion %d: %s - %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
