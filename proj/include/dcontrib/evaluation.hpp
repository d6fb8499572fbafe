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

// Comparison of the decentralised ranking with the centralised SHAP ranking.

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dcontrib/protocol.hpp"

namespace dcontrib {

/// Affine map sending the series' (min, max) to (target_min, target_max).
std::vector<double> minmax_align(std::span<const double> series, double target_min, double target_max);

/// Negated uncertainty per ranking entry, so that a higher score means a larger
/// estimated contribution. Ranking order is kept.
std::vector<std::pair<std::string, double>> invert_for_comparison(const ContributionRanking& ranking);

/// Kendall tau-b between two score vectors over the same items.
double kendall_tau(std::span<const double> a, std::span<const double> b);

/// Pearson correlation of average ranks.
double spearman_rho(std::span<const double> a, std::span<const double> b);

struct ComparisonRow {
  std::string actor_id;
  double uncertainty = 0.0;
  double aligned_uncertainty = 0.0;  // inverted, then aligned onto the SHAP range
  double shap = 0.0;
  double aligned_shap = 0.0;
  int rank_dec = 0;   // 1 = lowest uncertainty
  int rank_shap = 0;  // 1 = largest SHAP importance
  bool below_floor = false;
  bool is_noise = false;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;  // ascending uncertainty
  double kendall_tau = 0.0;         // over real actors (noise baseline excluded)
  double spearman_rho = 0.0;
  double decentralised_noise_gap = 0.0;  // weakest real actor minus noise, aligned units
  double shap_noise_gap = 0.0;
  double noise_contrast = 0.0;           // decentralised gap / SHAP gap
};

/// `shap_summary` may carry a "shared" pseudo-actor; it is left out. The
/// remaining actor set must equal the ranking's, noise baseline included.
ComparisonReport build_comparison(const ContributionRanking& ranking,
                                  const std::vector<std::pair<std::string, double>>& shap_summary);

inline constexpr const char* kRankTableFile = "rank_table.csv";
inline constexpr const char* kSummaryFile = "summary.txt";
inline constexpr const char* kChartFile = "chart.svg";

std::string rank_table_csv(const ComparisonReport& report);
std::string summary_text(const ComparisonReport& report);
std::string chart_svg(const ComparisonReport& report);

/// Writes rank_table.csv, summary.txt and chart.svg into `out_dir`.
void emit_report(const ComparisonReport& report, const std::filesystem::path& out_dir);

}  // namespace dcontrib
