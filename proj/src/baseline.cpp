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

#include "dcontrib/baseline.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "dcontrib/error.hpp"
#include "dcontrib/util.hpp"

namespace dcontrib {

Eigen::VectorXd CentralModel::predict(const Eigen::MatrixXd& raw) const {
  const Eigen::MatrixXd out = forward_batch(member, normaliser.apply(raw), clamp_of(hyper));
  return (target_scaler.mean + target_scaler.scale * out.col(0).array()).matrix();
}

CentralModel train_central(const std::vector<ActorDataset>& actors, const MetricSeries& metric,
                           const EnsembleHyper& hyper, std::uint64_t seed) {
  require(!actors.empty(), "central model needs at least one actor");
  hyper.validate();

  // Part ids present in every actor and the metric, in the first actor's order.
  const auto targets = metric.as_map();
  std::vector<std::unordered_map<std::string, Eigen::Index>> row_of(actors.size());
  for (std::size_t a = 0; a < actors.size(); ++a) {
    actors[a].validate();
    for (std::size_t r = 0; r < actors[a].rows(); ++r) {
      row_of[a].emplace(actors[a].part_ids[r], static_cast<Eigen::Index>(r));
    }
  }
  std::vector<std::string> ids;
  for (const auto& id : actors.front().part_ids) {
    bool everywhere = targets.count(id) > 0;
    for (std::size_t a = 1; a < actors.size() && everywhere; ++a) everywhere = row_of[a].count(id) > 0;
    if (everywhere) ids.push_back(id);
  }
  if (ids.empty()) fail(ErrorKind::kInvalidArgument, "no part ids shared by all actors and the metric");

  // Column sources; shared columns are taken once.
  struct Source {
    std::size_t actor;
    Eigen::Index col;
  };
  std::vector<Source> sources;
  CentralModel model;
  std::set<std::string> shared_seen;
  for (std::size_t a = 0; a < actors.size(); ++a) {
    for (std::size_t c = 0; c < actors[a].cols(); ++c) {
      const std::string& name = actors[a].feature_names[c];
      if (actors[a].shared[c]) {
        if (!shared_seen.insert(name).second) continue;
        model.feature_index.push_back({kSharedActorId, name});
      } else {
        model.feature_index.push_back({actors[a].actor_id, name});
      }
      sources.push_back({a, static_cast<Eigen::Index>(c)});
    }
  }

  Eigen::MatrixXd x(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(sources.size()));
  std::vector<double> y;
  y.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = 0; j < sources.size(); ++j) {
      const auto& s = sources[j];
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          actors[s.actor].features(row_of[s.actor].at(ids[i]), s.col);
    }
    y.push_back(targets.at(ids[i]));
  }

  PreparedData prepared = prepare_training(x, y, hyper.validation_fraction);
  model.hyper = hyper;
  model.normaliser = prepared.normaliser;
  model.target_scaler = prepared.target_scaler;
  const auto tr = static_cast<Eigen::Index>(prepared.train_rows);
  model.train_ids.assign(ids.begin(), ids.begin() + tr);
  model.validation_ids.assign(ids.begin() + tr, ids.end());
  model.train_x = x.topRows(tr);
  model.validation_x = x.bottomRows(x.rows() - tr);
  const Layout layout{sources.size(), static_cast<std::size_t>(hyper.hidden_size)};
  model.member = train_member(init_member(layout, mix_seed(seed, "central")), prepared.split, hyper);
  return model;
}

namespace {

/// v(S) for every mask, evaluated in chunks of stacked background copies.
std::vector<double> coalition_values(const BatchModel& model, std::span<const double> instance,
                                     const Eigen::MatrixXd& background, std::span<const std::uint64_t> masks) {
  const Eigen::Index nb = background.rows();
  const Eigen::Index d = background.cols();
  const std::size_t per_chunk = std::max<std::size_t>(1, 16384 / static_cast<std::size_t>(nb));
  std::vector<double> values;
  values.reserve(masks.size());
  Eigen::MatrixXd stacked;
  for (std::size_t start = 0; start < masks.size(); start += per_chunk) {
    const std::size_t stop = std::min(masks.size(), start + per_chunk);
    stacked.resize(static_cast<Eigen::Index>(stop - start) * nb, d);
    for (std::size_t k = start; k < stop; ++k) {
      auto block = stacked.middleRows(static_cast<Eigen::Index>(k - start) * nb, nb);
      block = background;
      for (Eigen::Index j = 0; j < d; ++j) {
        if ((masks[k] >> j) & 1u) block.col(j).setConstant(instance[static_cast<std::size_t>(j)]);
      }
    }
    const Eigen::VectorXd out = model(stacked);
    require(out.size() == stacked.rows(), "model returned the wrong number of predictions");
    for (std::size_t k = start; k < stop; ++k) {
      values.push_back(out.segment(static_cast<Eigen::Index>(k - start) * nb, nb).mean());
    }
  }
  return values;
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

void check_inputs(std::span<const double> instance, const Eigen::MatrixXd& background) {
  require(background.rows() > 0, "background set is empty");
  require(static_cast<Eigen::Index>(instance.size()) == background.cols(), "instance width does not match background");
  require(!instance.empty() && instance.size() < 64, "feature count must be in [1, 63]");
}

/// Visits every k-subset of {0..d-1} as a bit mask, in lexicographic order.
template <typename F>
void for_each_subset(int d, int k, F&& visit) {
  std::vector<int> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), 0);
  for (;;) {
    std::uint64_t mask = 0;
    for (int i : idx) mask |= std::uint64_t{1} << i;
    visit(mask);
    int i = k - 1;
    while (i >= 0 && idx[static_cast<std::size_t>(i)] == d - k + i) --i;
    if (i < 0) return;
    ++idx[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
}

}  // namespace

double coalition_value(const BatchModel& model, std::span<const double> instance, const Eigen::MatrixXd& background,
                       std::uint64_t mask) {
  check_inputs(instance, background);
  const std::uint64_t m[] = {mask};
  return coalition_values(model, instance, background, m).front();
}

ShapExplanation exact_shapley(const BatchModel& model, std::span<const double> instance,
                              const Eigen::MatrixXd& background) {
  check_inputs(instance, background);
  const int d = static_cast<int>(instance.size());
  if (instance.size() > kExactShapleyMaxFeatures) {
    fail(ErrorKind::kInvalidArgument, "exact Shapley enumeration supports at most " +
                                          std::to_string(kExactShapleyMaxFeatures) + " features");
  }
  const std::uint64_t full = (std::uint64_t{1} << d) - 1;
  std::vector<std::uint64_t> masks(full + 1);
  std::iota(masks.begin(), masks.end(), std::uint64_t{0});
  const std::vector<double> v = coalition_values(model, instance, background, masks);

  // weight(|S|) = |S|! (d - |S| - 1)! / d!
  std::vector<double> weight(static_cast<std::size_t>(d));
  for (int s = 0; s < d; ++s) weight[static_cast<std::size_t>(s)] = 1.0 / (d * binomial(d - 1, s));

  ShapExplanation ex;
  ex.phi.assign(static_cast<std::size_t>(d), 0.0);
  for (std::uint64_t mask = 0; mask <= full; ++mask) {
    const int size = std::popcount(mask);
    for (int j = 0; j < d; ++j) {
      const std::uint64_t bit = std::uint64_t{1} << j;
      if (mask & bit) continue;
      ex.phi[static_cast<std::size_t>(j)] += weight[static_cast<std::size_t>(size)] * (v[mask | bit] - v[mask]);
    }
  }
  ex.base_value = v[0];
  ex.prediction = v[full];
  return ex;
}

ShapExplanation kernel_shap(const BatchModel& model, std::span<const double> instance,
                            const Eigen::MatrixXd& background, std::size_t sample_count, std::uint64_t seed) {
  check_inputs(instance, background);
  const int d = static_cast<int>(instance.size());
  require(sample_count >= 2 * instance.size() + 2, "sample_count must be at least 2 * features + 2");

  const std::uint64_t full = (d == 64) ? ~std::uint64_t{0} : (std::uint64_t{1} << d) - 1;
  {
    const std::uint64_t ends[] = {0, full};
    const auto v = coalition_values(model, instance, background, ends);
    if (d == 1) return ShapExplanation{{v[1] - v[0]}, v[0], v[1]};
  }

  // Budget never exceeds the number of non-trivial coalitions.
  double budget = static_cast<double>(sample_count);
  if (d < 63) budget = std::min(budget, std::pow(2.0, d) - 2.0);

  const int num_sizes = (d - 1 + 1) / 2;  // ceil((d-1)/2)
  const int num_paired = (d - 1) / 2;
  std::vector<double> size_weight(static_cast<std::size_t>(num_sizes));
  for (int s = 1; s <= num_sizes; ++s) {
    double w = (d - 1.0) / (s * static_cast<double>(d - s));
    if (s <= num_paired) w *= 2.0;
    size_weight[static_cast<std::size_t>(s - 1)] = w;
  }
  const double total_w = std::accumulate(size_weight.begin(), size_weight.end(), 0.0);
  for (auto& w : size_weight) w /= total_w;

  std::vector<std::uint64_t> masks;
  std::vector<double> weights;
  std::map<std::uint64_t, std::size_t> sampled_index;  // sampled (not enumerated) coalitions

  double remaining = budget;
  std::vector<double> remaining_w = size_weight;
  int num_full = 0;
  for (int s = 1; s <= num_sizes; ++s) {
    const bool paired = s <= num_paired;
    const double nsubsets = binomial(d, s) * (paired ? 2.0 : 1.0);
    if (remaining * remaining_w[static_cast<std::size_t>(s - 1)] / nsubsets < 1.0 - 1e-8) break;
    ++num_full;
    remaining -= nsubsets;
    const double rw = remaining_w[static_cast<std::size_t>(s - 1)];
    if (rw < 1.0) {
      for (auto& w : remaining_w) w /= (1.0 - rw);
    }
    const double w = size_weight[static_cast<std::size_t>(s - 1)] / binomial(d, s) / (paired ? 2.0 : 1.0);
    for_each_subset(d, s, [&](std::uint64_t mask) {
      masks.push_back(mask);
      weights.push_back(w);
      if (paired) {
        masks.push_back(full & ~mask);
        weights.push_back(w);
      }
    });
  }

  if (num_full < num_sizes && remaining >= 1.0) {
    const std::size_t fixed = masks.size();
    std::vector<double> tail(size_weight.begin() + num_full, size_weight.end());
    const double tail_weight = std::accumulate(tail.begin(), tail.end(), 0.0);
    std::mt19937_64 rng(seed);
    std::discrete_distribution<int> pick_size(tail.begin(), tail.end());
    std::vector<int> features(static_cast<std::size_t>(d));
    auto add = [&](std::uint64_t mask) {
      auto [it, inserted] = sampled_index.emplace(mask, masks.size());
      if (inserted) {
        masks.push_back(mask);
        weights.push_back(1.0);
      } else {
        weights[it->second] += 1.0;
      }
    };
    auto left = static_cast<long long>(remaining);
    for (long long attempts = 0; left > 0 && attempts < 4 * static_cast<long long>(budget); ++attempts) {
      const int s = num_full + 1 + pick_size(rng);
      std::iota(features.begin(), features.end(), 0);
      std::uint64_t mask = 0;
      for (int i = 0; i < s; ++i) {
        std::uniform_int_distribution<int> pick(i, d - 1);
        std::swap(features[static_cast<std::size_t>(i)], features[static_cast<std::size_t>(pick(rng))]);
        mask |= std::uint64_t{1} << features[static_cast<std::size_t>(i)];
      }
      add(mask);
      --left;
      if (s <= num_paired && left > 0) {
        add(full & ~mask);
        --left;
      }
    }
    double sampled_total = 0.0;
    for (std::size_t k = fixed; k < weights.size(); ++k) sampled_total += weights[k];
    for (std::size_t k = fixed; k < weights.size(); ++k) weights[k] *= tail_weight / sampled_total;
  }

  std::vector<std::uint64_t> all = masks;
  all.push_back(0);
  all.push_back(full);
  const std::vector<double> v = coalition_values(model, instance, background, all);
  const double base = v[v.size() - 2];
  const double fx = v.back();
  const double total = fx - base;

  // Eliminate the last feature through the efficiency constraint.
  const auto n = static_cast<Eigen::Index>(masks.size());
  const Eigen::Index last = d - 1;
  Eigen::MatrixXd z(n, last);
  Eigen::VectorXd target(n);
  Eigen::VectorXd w(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::uint64_t mask = masks[static_cast<std::size_t>(k)];
    const double in_last = static_cast<double>((mask >> last) & 1u);
    for (Eigen::Index j = 0; j < last; ++j) z(k, j) = static_cast<double>((mask >> j) & 1u) - in_last;
    target[k] = v[static_cast<std::size_t>(k)] - base - in_last * total;
    w[k] = weights[static_cast<std::size_t>(k)];
  }
  // Small budgets can leave the sampled design rank deficient; take the minimum-norm solution then.
  const Eigen::VectorXd sw = w.array().sqrt().matrix();
  const Eigen::MatrixXd a = sw.asDiagonal() * z;
  const Eigen::VectorXd b = (sw.array() * target.array()).matrix();
  const Eigen::VectorXd solved = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(a).solve(b);

  ShapExplanation ex;
  ex.base_value = base;
  ex.prediction = fx;
  ex.phi.assign(solved.data(), solved.data() + solved.size());
  ex.phi.push_back(total - solved.sum());
  return ex;
}

ShapReport explain_central(const CentralModel& model, const ShapOptions& options) {
  require(options.background_size > 0, "background_size must be positive");
  require(model.validation_x.rows() > 0, "central model has no validation rows to explain");
  const auto n_train = static_cast<std::size_t>(model.train_x.rows());
  std::vector<std::size_t> pick(n_train);
  std::iota(pick.begin(), pick.end(), 0);
  std::mt19937_64 rng(mix_seed(options.seed, "background"));
  std::shuffle(pick.begin(), pick.end(), rng);
  pick.resize(std::min(n_train, options.background_size));
  std::sort(pick.begin(), pick.end());
  Eigen::MatrixXd background(static_cast<Eigen::Index>(pick.size()), model.train_x.cols());
  for (std::size_t i = 0; i < pick.size(); ++i) {
    background.row(static_cast<Eigen::Index>(i)) = model.train_x.row(static_cast<Eigen::Index>(pick[i]));
  }

  const BatchModel f = [&model](const Eigen::MatrixXd& rows) { return model.predict(rows); };
  const auto n_explain = std::min<std::size_t>(options.explain_limit, static_cast<std::size_t>(model.validation_x.rows()));
  ShapReport report;
  report.feature_index = model.feature_index;
  report.phi.resize(static_cast<Eigen::Index>(n_explain), model.validation_x.cols());
  std::vector<double> row(static_cast<std::size_t>(model.validation_x.cols()));
  for (std::size_t i = 0; i < n_explain; ++i) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] = model.validation_x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    const ShapExplanation ex = kernel_shap(f, row, background, options.sample_count, options.seed);
    for (std::size_t j = 0; j < row.size(); ++j) {
      report.phi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ex.phi[j];
    }
    report.instance_ids.push_back(model.validation_ids[i]);
    report.base_values.push_back(ex.base_value);
    report.predictions.push_back(ex.prediction);
  }
  return report;
}

std::vector<std::pair<std::string, double>> aggregate_company(const Eigen::MatrixXd& phi,
                                                              const std::vector<FeatureRef>& feature_index) {
  require(phi.rows() > 0, "no explained instances to aggregate");
  require(phi.cols() == static_cast<Eigen::Index>(feature_index.size()), "feature index does not cover every feature");
  std::vector<std::pair<std::string, double>> out;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& ref : feature_index) {
    require(!ref.actor_id.empty(), "feature " + ref.column + " has no actor mapping");
    if (slot.emplace(ref.actor_id, out.size()).second) out.emplace_back(ref.actor_id, 0.0);
  }
  for (Eigen::Index i = 0; i < phi.rows(); ++i) {
    for (Eigen::Index j = 0; j < phi.cols(); ++j) {
      out[slot.at(feature_index[static_cast<std::size_t>(j)].actor_id)].second += std::abs(phi(i, j));
    }
  }
  for (auto& [actor, value] : out) value /= static_cast<double>(phi.rows());
  return out;
}

std::vector<std::pair<std::string, double>> aggregate_company(const ShapReport& report) {
  return aggregate_company(report.phi, report.feature_index);
}

std::string shap_values_csv(const ShapReport& report) {
  std::string out = "part_id,feature,actor_id,phi\n";
  for (Eigen::Index i = 0; i < report.phi.rows(); ++i) {
    for (Eigen::Index j = 0; j < report.phi.cols(); ++j) {
      const auto& ref = report.feature_index[static_cast<std::size_t>(j)];
      out += csv_escape(report.instance_ids[static_cast<std::size_t>(i)]) + ',' + csv_escape(ref.column) + ',' +
             csv_escape(ref.actor_id) + ',' + format_double(report.phi(i, j)) + '\n';
    }
  }
  return out;
}

std::string shap_instances_csv(const ShapReport& report) {
  std::string out = "part_id,base_value,prediction\n";
  for (std::size_t i = 0; i < report.instance_ids.size(); ++i) {
    out += csv_escape(report.instance_ids[i]) + ',' + format_double(report.base_values[i]) + ',' +
           format_double(report.predictions[i]) + '\n';
  }
  return out;
}

std::string shap_summary_csv(const std::vector<std::pair<std::string, double>>& summary) {
  std::string out = "actor_id,importance\n";
  for (const auto& [actor, value] : summary) out += csv_escape(actor) + ',' + format_double(value) + '\n';
  return out;
}

std::vector<std::pair<std::string, double>> load_shap_summary_csv(const std::filesystem::path& path) {
  RawTable t = load_csv(path, "actor_id");
  auto col = t.column_index("importance");
  if (!col || t.columns.size() != 1) fail(ErrorKind::kParse, "not a SHAP summary csv: " + path.string());
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const double v = t.values(static_cast<Eigen::Index>(r), 0);
    if (is_missing(v)) fail(ErrorKind::kParse, "missing importance for " + t.ids[r]);
    out.emplace_back(t.ids[r], v);
  }
  return out;
}

}  // namespace dcontrib
