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

#include <cmath>
#include <filesystem>

#include "dcontrib/error.hpp"
#include "dcontrib/evaluation.hpp"
#include "dcontrib/util.hpp"

using namespace dcontrib;

namespace {

ContributionRanking sample_ranking() {
  return rank_contributions({{"A", "c", 1.0}, {"B", "c", 2.0}, {"C", "c", 3.0}}, {kNoiseActorId, "c", 4.0});
}

std::vector<std::pair<std::string, double>> sample_shap() {
  return {{"A", 0.9}, {"B", 0.5}, {"C", 0.3}, {kNoiseActorId, 0.1}, {kSharedActorId, 0.2}};
}

}  // namespace

TEST_CASE("minmax alignment") {
  const std::vector<double> a{0.0, 10.0};
  CHECK(minmax_align(a, 0.0, 1.0) == std::vector<double>{0.0, 1.0});
  const std::vector<double> b{0.0, 0.5, 1.0};
  CHECK(minmax_align(b, 0.0, 1.0) == b);
  const std::vector<double> c{2.0, 4.0, 6.0};
  const auto r = minmax_align(c, 0.0, 1.0);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == doctest::Approx(0.5));
  CHECK(r[2] == 1.0);
  const std::vector<double> flat{3.0, 3.0};
  CHECK_THROWS_AS(minmax_align(flat, 0.0, 1.0), Error);
  CHECK_THROWS_AS(minmax_align(c, 1.0, 1.0), Error);
}

TEST_CASE("alignment ignores affine changes of the input") {
  const std::vector<double> x{0.3, -1.2, 4.5, 2.2};
  std::vector<double> y;
  for (double v : x) y.push_back(7.0 * v - 3.0);
  const auto ax = minmax_align(x, -1.0, 2.0);
  const auto ay = minmax_align(y, -1.0, 2.0);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(ax[i] == doctest::Approx(ay[i]).epsilon(1e-12));
}

TEST_CASE("inversion reverses order and keeps ties") {
  const auto r = rank_contributions({{"A", "c", 1.0}, {"B", "c", 3.0}, {"C", "c", 3.0}}, {kNoiseActorId, "c", 5.0});
  const auto s = invert_for_comparison(r);
  std::map<std::string, double> m(s.begin(), s.end());
  CHECK(m["A"] > m["B"]);
  CHECK(m["B"] == m["C"]);
  std::vector<double> v;
  for (const auto& p : s) v.push_back(p.second);
  const auto aligned = minmax_align(v, 0.0, 1.0);
  CHECK(std::max_element(aligned.begin(), aligned.end()) - aligned.begin() ==
        std::max_element(v.begin(), v.end()) - v.begin());
}

TEST_CASE("kendall tau values") {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> rev{5, 4, 3, 2, 1};
  const std::vector<double> swap{2, 1, 3, 4, 5};
  CHECK(kendall_tau(a, a) == 1.0);
  CHECK(kendall_tau(a, rev) == -1.0);
  CHECK(kendall_tau(a, swap) == doctest::Approx(0.8));
  CHECK(kendall_tau(swap, a) == kendall_tau(a, swap));
  std::vector<double> mono;
  for (double v : swap) mono.push_back(std::exp(v));
  CHECK(kendall_tau(a, mono) == kendall_tau(a, swap));
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(kendall_tau(one, one), Error);
}

TEST_CASE("kendall tau-b with ties against a pair-count oracle") {
  const std::vector<double> a{1, 2, 2, 3, 4, 4, 5};
  const std::vector<double> b{2, 1, 3, 3, 5, 4, 4};
  double conc = 0, disc = 0, ta = 0, tb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const double da = a[i] - a[j], db = b[i] - b[j];
      if (da == 0 && db == 0) continue;
      if (da == 0) ++ta;
      else if (db == 0) ++tb;
      else if (da * db > 0) ++conc;
      else ++disc;
    }
  }
  const double expected = (conc - disc) / std::sqrt((conc + disc + ta) * (conc + disc + tb));
  CHECK(kendall_tau(a, b) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("spearman rho values") {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> rev{50, 40, 30, 20, 10};
  const std::vector<double> swap{2, 1, 3, 4, 5};
  CHECK(spearman_rho(a, a) == doctest::Approx(1.0));
  CHECK(spearman_rho(a, rev) == doctest::Approx(-1.0));
  // 1 - 6 * 2 / (5 * 24)
  CHECK(spearman_rho(a, swap) == doctest::Approx(0.9));
}

TEST_CASE("comparison aligns both series onto the SHAP range") {
  const ComparisonReport r = build_comparison(sample_ranking(), sample_shap());
  REQUIRE(r.rows.size() == 4);
  double umin = 1e9, umax = -1e9, smin = 1e9, smax = -1e9;
  for (const auto& row : r.rows) {
    CHECK(row.actor_id != kSharedActorId);
    umin = std::min(umin, row.aligned_uncertainty);
    umax = std::max(umax, row.aligned_uncertainty);
    smin = std::min(smin, row.aligned_shap);
    smax = std::max(smax, row.aligned_shap);
  }
  CHECK(umin == doctest::Approx(smin));
  CHECK(umax == doctest::Approx(smax));
  CHECK(r.kendall_tau == 1.0);
  CHECK(r.spearman_rho == doctest::Approx(1.0));
  CHECK(r.rows.back().is_noise);
  CHECK(r.rows.back().aligned_uncertainty == doctest::Approx(0.1));
}

TEST_CASE("comparison needs matching actor sets") {
  auto shap = sample_shap();
  shap.erase(shap.begin());
  CHECK_THROWS_AS(build_comparison(sample_ranking(), shap), Error);
  shap = sample_shap();
  shap.push_back({"Z", 0.4});
  CHECK_THROWS_AS(build_comparison(sample_ranking(), shap), Error);
}

TEST_CASE("report files") {
  const ComparisonReport r = build_comparison(sample_ranking(), sample_shap());
  const auto dir = std::filesystem::temp_directory_path() / "dcontrib_report_test";
  std::filesystem::remove_all(dir);
  emit_report(r, dir);
  CHECK(std::filesystem::exists(dir / kRankTableFile));
  CHECK(std::filesystem::exists(dir / kSummaryFile));
  CHECK(std::filesystem::exists(dir / kChartFile));
  const std::string csv = read_text_file(dir / kRankTableFile);
  CHECK(csv.rfind("actor_id,uncertainty,aligned_uncertainty,shap,aligned_shap,rank_dec,rank_shap,below_floor\n", 0) ==
        0);
  emit_report(r, dir);
  CHECK(read_text_file(dir / kRankTableFile) == csv);
  CHECK(read_text_file(dir / kChartFile).find(">noise-baseline<") != std::string::npos);
  CHECK(read_text_file(dir / kSummaryFile).find("kendall_tau=1") != std::string::npos);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(emit_report(r, "/proc/dcontrib-cannot-write"), Error);
}
