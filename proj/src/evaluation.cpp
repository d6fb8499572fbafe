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

#include "dcontrib/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "dcontrib/error.hpp"
#include "dcontrib/util.hpp"

namespace dcontrib {

std::vector<double> minmax_align(std::span<const double> series, double target_min, double target_max) {
  require(series.size() >= 2, "alignment needs at least two values");
  require(target_min < target_max, "alignment target needs min < max");
  const auto [lo_it, hi_it] = std::minmax_element(series.begin(), series.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  require(hi > lo, "cannot align a constant series");
  std::vector<double> out;
  out.reserve(series.size());
  for (double v : series) {
    if (v == lo) out.push_back(target_min);
    else if (v == hi) out.push_back(target_max);
    else out.push_back(target_min + (v - lo) / (hi - lo) * (target_max - target_min));
  }
  return out;
}

std::vector<std::pair<std::string, double>> invert_for_comparison(const ContributionRanking& ranking) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& e : ranking.entries) out.emplace_back(e.actor_id, -e.total_uncertainty);
  return out;
}

double kendall_tau(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "kendall tau needs equal-length inputs");
  require(a.size() >= 2, "kendall tau needs at least two items");
  long long concordant = 0, discordant = 0, ties_a = 0, ties_b = 0, pairs = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      ++pairs;
      const double da = a[i] - a[j];
      const double db = b[i] - b[j];
      if (da == 0.0) ++ties_a;
      if (db == 0.0) ++ties_b;
      if (da == 0.0 || db == 0.0) continue;
      ((da > 0) == (db > 0) ? concordant : discordant)++;
    }
  }
  const double denom = std::sqrt(static_cast<double>(pairs - ties_a) * static_cast<double>(pairs - ties_b));
  if (denom == 0.0) return 0.0;
  return static_cast<double>(concordant - discordant) / denom;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman_rho(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size() && a.size() >= 2, "spearman rho needs two equal-length inputs of size >= 2");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

ComparisonReport build_comparison(const ContributionRanking& ranking,
                                  const std::vector<std::pair<std::string, double>>& shap_summary) {
  require(!ranking.entries.empty(), "ranking is empty");
  std::map<std::string, double> shap;
  for (const auto& [actor, value] : shap_summary) {
    if (actor == kSharedActorId) continue;
    require(shap.emplace(actor, value).second, "duplicate actor in SHAP summary: " + actor);
  }
  std::set<std::string> dec_actors;
  for (const auto& e : ranking.entries) dec_actors.insert(e.actor_id);
  std::set<std::string> shap_actors;
  for (const auto& [a, v] : shap) shap_actors.insert(a);
  if (dec_actors != shap_actors) {
    fail(ErrorKind::kInvalidArgument, "decentralised and SHAP actor sets differ");
  }

  ComparisonReport report;
  std::vector<double> inverted, shap_values;
  for (const auto& e : ranking.entries) {
    ComparisonRow row;
    row.actor_id = e.actor_id;
    row.uncertainty = e.total_uncertainty;
    row.shap = shap.at(e.actor_id);
    row.below_floor = e.below_floor;
    row.is_noise = e.is_noise;
    report.rows.push_back(row);
    inverted.push_back(-e.total_uncertainty);
    shap_values.push_back(row.shap);
  }
  const auto [smin, smax] = std::minmax_element(shap_values.begin(), shap_values.end());
  const auto aligned_dec = minmax_align(inverted, *smin, *smax);
  const auto aligned_shap = minmax_align(shap_values, *smin, *smax);
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    report.rows[i].aligned_uncertainty = aligned_dec[i];
    report.rows[i].aligned_shap = aligned_shap[i];
  }

  auto assign_ranks = [&](auto key, int ComparisonRow::*field) {
    std::vector<std::size_t> order(report.rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
      const double ki = key(report.rows[i]);
      const double kj = key(report.rows[j]);
      if (ki != kj) return ki > kj;
      return report.rows[i].actor_id < report.rows[j].actor_id;
    });
    for (std::size_t r = 0; r < order.size(); ++r) report.rows[order[r]].*field = static_cast<int>(r + 1);
  };
  assign_ranks([](const ComparisonRow& r) { return -r.uncertainty; }, &ComparisonRow::rank_dec);
  assign_ranks([](const ComparisonRow& r) { return r.shap; }, &ComparisonRow::rank_shap);

  std::vector<double> dec_real, shap_real;
  double dec_noise = 0, shap_noise = 0;
  bool have_noise = false;
  double dec_weakest = 0, shap_weakest = 0;
  bool first = true;
  for (const auto& r : report.rows) {
    if (r.is_noise) {
      dec_noise = r.aligned_uncertainty;
      shap_noise = r.aligned_shap;
      have_noise = true;
      continue;
    }
    dec_real.push_back(-r.uncertainty);
    shap_real.push_back(r.shap);
    dec_weakest = first ? r.aligned_uncertainty : std::min(dec_weakest, r.aligned_uncertainty);
    shap_weakest = first ? r.aligned_shap : std::min(shap_weakest, r.aligned_shap);
    first = false;
  }
  if (dec_real.size() >= 2) {
    report.kendall_tau = kendall_tau(dec_real, shap_real);
    report.spearman_rho = spearman_rho(dec_real, shap_real);
  }
  if (have_noise && !first) {
    report.decentralised_noise_gap = dec_weakest - dec_noise;
    report.shap_noise_gap = shap_weakest - shap_noise;
    report.noise_contrast = report.shap_noise_gap != 0.0
                                ? report.decentralised_noise_gap / report.shap_noise_gap
                                : std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

std::string rank_table_csv(const ComparisonReport& report) {
  std::string out = "actor_id,uncertainty,aligned_uncertainty,shap,aligned_shap,rank_dec,rank_shap,below_floor\n";
  for (const auto& r : report.rows) {
    out += csv_escape(r.actor_id) + ',' + format_double(r.uncertainty) + ',' + format_double(r.aligned_uncertainty) +
           ',' + format_double(r.shap) + ',' + format_double(r.aligned_shap) + ',' + std::to_string(r.rank_dec) + ',' +
           std::to_string(r.rank_shap) + ',' + (r.below_floor ? "1" : "0") + '\n';
  }
  return out;
}

std::string summary_text(const ComparisonReport& report) {
  std::string out;
  out += "actors=" + std::to_string(report.rows.size()) + "\n";
  out += "kendall_tau=" + format_double(report.kendall_tau) + "\n";
  out += "spearman_rho=" + format_double(report.spearman_rho) + "\n";
  out += "decentralised_noise_gap=" + format_double(report.decentralised_noise_gap) + "\n";
  out += "shap_noise_gap=" + format_double(report.shap_noise_gap) + "\n";
  out += "noise_contrast=" + format_double(report.noise_contrast) + "\n";
  return out;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string chart_svg(const ComparisonReport& report) {
  // Grouped bars: aligned decentralised score and aligned SHAP per actor.
  const double width = 120.0 + 90.0 * static_cast<double>(report.rows.size());
  const double height = 360.0;
  const double plot_top = 40.0, plot_bottom = 290.0, left = 60.0;
  double lo = 0.0, hi = 0.0;
  for (const auto& r : report.rows) {
    lo = std::min({lo, r.aligned_uncertainty, r.aligned_shap});
    hi = std::max({hi, r.aligned_uncertainty, r.aligned_shap});
  }
  if (hi == lo) hi = lo + 1.0;
  auto y_of = [&](double v) { return plot_bottom - (v - lo) / (hi - lo) * (plot_bottom - plot_top); };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(width) + "\" height=\"" +
                    fixed(height) + "\" viewBox=\"0 0 " + fixed(width) + " " + fixed(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fixed(left) + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
         "Contribution estimate: decentralised vs centralised SHAP (min-max aligned)</text>\n";
  svg += "<line x1=\"" + fixed(left) + "\" y1=\"" + fixed(y_of(0.0)) + "\" x2=\"" + fixed(width - 20) + "\" y2=\"" +
         fixed(y_of(0.0)) + "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    const double x = left + 20.0 + 90.0 * static_cast<double>(i);
    auto bar = [&](double v, double dx, const char* colour, const char* series) {
      const double y0 = y_of(0.0), y1 = y_of(v);
      svg += "<rect class=\"" + std::string(series) + "\" x=\"" + fixed(x + dx) + "\" y=\"" + fixed(std::min(y0, y1)) +
             "\" width=\"30.00\" height=\"" + fixed(std::abs(y1 - y0)) + "\" fill=\"" + colour + "\"><title>" +
             xml_escape(r.actor_id) + " " + series + " " + format_double(v) + "</title></rect>\n";
    };
    bar(r.aligned_uncertainty, 0.0, "#1f77b4", "decentralised");
    bar(r.aligned_shap, 32.0, "#ff7f0e", "shap");
    svg += "<text x=\"" + fixed(x + 31.0) + "\" y=\"" + fixed(plot_bottom + 20.0) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" + xml_escape(r.actor_id) +
           "</text>\n";
  }
  svg += "<rect x=\"" + fixed(left) + "\" y=\"330\" width=\"12\" height=\"12\" fill=\"#1f77b4\"/>"
         "<text x=\"" + fixed(left + 16) + "\" y=\"341\" font-family=\"sans-serif\" font-size=\"11\">decentralised (inverted uncertainty)</text>\n";
  svg += "<rect x=\"" + fixed(left + 230) + "\" y=\"330\" width=\"12\" height=\"12\" fill=\"#ff7f0e\"/>"
         "<text x=\"" + fixed(left + 246) + "\" y=\"341\" font-family=\"sans-serif\" font-size=\"11\">centralised SHAP</text>\n";
  svg += "</svg>\n";
  return svg;
}

void emit_report(const ComparisonReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) fail(ErrorKind::kIo, "cannot create directory " + out_dir.string());
  write_text_file(out_dir / kRankTableFile, rank_table_csv(report));
  write_text_file(out_dir / kSummaryFile, summary_text(report));
  write_text_file(out_dir / kChartFile, chart_svg(report));
}

}  // namespace dcontrib
