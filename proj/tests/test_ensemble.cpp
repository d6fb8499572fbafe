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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "dcontrib/dataset.hpp"
#include "dcontrib/ensemble.hpp"
#include "dcontrib/error.hpp"

using namespace dcontrib;

namespace {

EnsembleHyper small_hyper() {
  EnsembleHyper h;
  h.member_count = 3;
  h.hidden_size = 16;
  h.batch_size = 32;
  h.max_epochs = 40;
  h.patience_epochs = 10;
  return h;
}

// Rows p0..p{n-1}; `fill(r, c, rng)` gives feature values, targets from `target(r, row, rng)`.
struct Fixture {
  ActorDataset actor;
  MetricSeries metric;
};

Fixture make_fixture(std::size_t n, std::size_t cols, std::uint64_t seed, double constant_target = std::nan("")) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Fixture f;
  f.actor.actor_id = "a";
  f.actor.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols));
  for (std::size_t c = 0; c < cols; ++c) {
    f.actor.feature_names.push_back("f" + std::to_string(c));
    f.actor.shared.push_back(false);
  }
  std::vector<MetricEntry> entries;
  for (std::size_t r = 0; r < n; ++r) {
    f.actor.part_ids.push_back("p" + std::to_string(r));
    for (std::size_t c = 0; c < cols; ++c) {
      f.actor.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = normal(rng);
    }
    const double y = std::isnan(constant_target)
                         ? std::sin(f.actor.features(static_cast<Eigen::Index>(r), 0)) + 0.3 * normal(rng)
                         : constant_target;
    entries.push_back({f.actor.part_ids.back(), y});
  }
  f.metric = MetricSeries(std::move(entries));
  return f;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

}  // namespace

TEST_CASE("member combination hand values") {
  const std::vector<double> mu{0.0, 2.0}, var{1.0, 1.0};
  const PredictiveSummary s = combine_members(mu, var);
  CHECK(s.mean == 1.0);
  CHECK(s.knowledge_variance == 1.0);
  CHECK(s.data_variance == 1.0);
  CHECK(s.total_variance == 2.0);

  const std::vector<double> same{0.7, 0.7, 0.7}, var3{1.0, 2.0, 3.0};
  const PredictiveSummary t = combine_members(same, var3);
  CHECK(t.knowledge_variance < 1e-30);
  CHECK(t.total_variance == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("two-component mixture variance agrees with sampling") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const int draws = 1'000'000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double v = (coin(rng) ? 2.0 : 0.0) + n(rng);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / draws;
  const double var = sum2 / draws - mean * mean;
  CHECK(std::abs(var - 2.0) / 2.0 < 0.01);
}

TEST_CASE("validation split size") {
  CHECK(validation_row_count(100, 0.2) == 20);
  CHECK(validation_row_count(3, 0.01) == 1);
  CHECK(validation_row_count(3, 0.99) == 2);
}

TEST_CASE("normaliser maps constant columns to zero") {
  Eigen::MatrixXd x{{1.0, 5.0}, {3.0, 5.0}};
  const FeatureNormaliser n = FeatureNormaliser::fit(x);
  const Eigen::MatrixXd z = n.apply(x);
  CHECK(z(0, 0) == doctest::Approx(-1.0));
  CHECK(z(1, 0) == doctest::Approx(1.0));
  CHECK(z(0, 1) == 0.0);
  CHECK(z(1, 1) == 0.0);
}

TEST_CASE("ensemble members share a split and differ by seed") {
  const Fixture f = make_fixture(400, 2, 3);
  const Ensemble e = train_ensemble(f.actor, f.metric, small_hyper(), 100);
  REQUIRE(e.members.size() == 3);
  CHECK(e.members[0].seed == 100);
  CHECK(e.members[1].seed == 101);
  CHECK(e.members[2].seed == 102);
  CHECK_FALSE(e.members[0] == e.members[1]);
  CHECK(e.validation_ids.size() == 80);
  CHECK(e.validation_ids.front() == "p320");
  CHECK(e.training_log.size() == 3);
}

TEST_CASE("concurrent and sequential training agree") {
  const Fixture f = make_fixture(300, 2, 4);
  const Ensemble a = train_ensemble(f.actor, f.metric, small_hyper(), 9, Execution::kSequential);
  const Ensemble b = train_ensemble(f.actor, f.metric, small_hyper(), 9, Execution::kConcurrent);
  CHECK(a == b);
}

TEST_CASE("constant target is learned by every member") {
  const Fixture f = make_fixture(400, 3, 5, 4.0);
  EnsembleHyper h = small_hyper();
  h.member_count = 2;
  const Ensemble e = train_ensemble(f.actor, f.metric, h, 1);
  for (std::size_t r = 320; r < 400; ++r) {
    const Eigen::VectorXd x = f.actor.features.row(static_cast<Eigen::Index>(r));
    CHECK(std::abs(predict(e, std::span<const double>(x.data(), 3)).mean - 4.0) < 0.05);
  }
}

TEST_CASE("predict decomposes and rejects wrong arity") {
  const Fixture f = make_fixture(300, 2, 6);
  const Ensemble e = train_ensemble(f.actor, f.metric, small_hyper(), 2);
  const std::vector<double> x{0.2, -0.4};
  const PredictiveSummary s = predict(e, x);
  CHECK(s.knowledge_variance >= 0.0);
  CHECK(s.data_variance > 0.0);
  CHECK(s.total_variance == doctest::Approx(s.knowledge_variance + s.data_variance));
  const std::vector<double> bad{0.2};
  CHECK_THROWS_AS(predict(e, bad), Error);
}

TEST_CASE("total uncertainty of identical unit-variance members is one") {
  Ensemble e;
  e.layout = {2, 3};
  e.normaliser.mean = {0.0, 0.0};
  e.normaliser.scale = {1.0, 1.0};
  for (int m = 0; m < 3; ++m) {
    Member mem = init_member(e.layout, static_cast<std::uint64_t>(m));
    mem.set_parameters(std::vector<double>(mem.parameter_count(), 0.0));
    mem.b2(0) = 0.25;
    e.members.push_back(mem);
  }
  const Fixture f = make_fixture(10, 2, 1);
  e.validation_ids = {"p7", "p8", "p9"};
  CHECK(total_uncertainty(e, f.actor) == 1.0);
  CHECK(total_uncertainty(e, f.actor) == total_uncertainty(e, f.actor));
  e.validation_ids.clear();
  CHECK_THROWS_AS(total_uncertainty(e, f.actor), Error);
}

TEST_CASE("an empty join is an error") {
  const Fixture f = make_fixture(300, 2, 6);
  const MetricSeries other({{"zz", 1.0}});
  CHECK_THROWS_AS(train_ensemble(f.actor, other, small_hyper(), 1), Error);
}

TEST_CASE("checkpoint round trip reproduces predictions bit for bit") {
  const Fixture f = make_fixture(300, 2, 7);
  const Ensemble e = train_ensemble(f.actor, f.metric, small_hyper(), 11);
  const auto path = std::filesystem::temp_directory_path() / "dcontrib_ckpt.json";
  save_ensemble(e, path);
  const Ensemble back = load_ensemble(path);
  std::filesystem::remove(path);
  CHECK(back == e);
  for (std::size_t r = 0; r < 20; ++r) {
    const Eigen::VectorXd x = f.actor.features.row(static_cast<Eigen::Index>(r));
    const PredictiveSummary a = predict(e, std::span<const double>(x.data(), 2));
    const PredictiveSummary b = predict(back, std::span<const double>(x.data(), 2));
    CHECK(a.mean == b.mean);
    CHECK(a.total_variance == b.total_variance);
  }
  CHECK_THROWS_AS(ensemble_from_json("{\"format\":\"other\",\"version\":1}"), Error);
}

TEST_CASE("pure noise is more uncertain than an informative actor") {
  std::vector<double> informative, noise;
  EnsembleHyper h = small_hyper();
  h.member_count = 2;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Fixture f = make_fixture(300, 1, seed + 50);
    // Feature = target plus jitter.
    const std::vector<double> y = f.metric.values();
    for (std::size_t r = 0; r < y.size(); ++r) f.actor.features(static_cast<Eigen::Index>(r), 0) = y[r] + 1e-3 * n(rng);
    const Ensemble ei = train_ensemble(f.actor, f.metric, h, seed);
    informative.push_back(total_uncertainty(ei, f.actor));
    const ActorDataset na = make_noise_actor(f.actor.rows(), 1, f.actor.part_ids, seed + 999);
    const Ensemble en = train_ensemble(na, f.metric, h, seed);
    noise.push_back(total_uncertainty(en, na));
  }
  CHECK(median(noise) > median(informative));
}
