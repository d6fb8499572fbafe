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

#include "dcontrib/ensemble.hpp"

#include <cmath>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "dcontrib/error.hpp"
#include "dcontrib/util.hpp"
#include "hyper_json.hpp"

namespace dcontrib {

using nlohmann::json;

FeatureNormaliser FeatureNormaliser::fit(const Eigen::MatrixXd& x) {
  require(x.rows() > 0, "cannot fit a normaliser on zero rows");
  FeatureNormaliser n;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    const double var = (x.col(c).array() - mean).square().mean();
    const double sd = std::sqrt(var);
    n.mean.push_back(mean);
    n.scale.push_back(sd > 1e-12 ? sd : 0.0);
  }
  return n;
}

Eigen::MatrixXd FeatureNormaliser::apply(const Eigen::MatrixXd& x) const {
  require(x.cols() == static_cast<Eigen::Index>(mean.size()), "normaliser width mismatch");
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double s = scale[static_cast<std::size_t>(c)];
    if (s == 0.0) {
      out.col(c).setZero();
    } else {
      out.col(c) = (x.col(c).array() - mean[static_cast<std::size_t>(c)]) / s;
    }
  }
  return out;
}

void FeatureNormaliser::apply_row(std::span<const double> in, std::span<double> out) const {
  require(in.size() == mean.size() && out.size() == mean.size(), "normaliser width mismatch");
  for (std::size_t c = 0; c < in.size(); ++c) out[c] = scale[c] == 0.0 ? 0.0 : (in[c] - mean[c]) / scale[c];
}

TargetScaler TargetScaler::fit(std::span<const double> y) {
  require(!y.empty(), "cannot fit a target scaler on zero rows");
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var /= static_cast<double>(y.size());
  const double sd = std::sqrt(var);
  return {mean, sd > 1e-12 ? sd : 1.0};
}

PredictiveSummary combine_members(std::span<const double> means, std::span<const double> variances) {
  require(!means.empty() && means.size() == variances.size(), "member output sets must be non-empty and equal length");
  const double m = static_cast<double>(means.size());
  PredictiveSummary s;
  for (double mu : means) s.mean += mu;
  s.mean /= m;
  for (double mu : means) s.knowledge_variance += (s.mean - mu) * (s.mean - mu);
  s.knowledge_variance /= m;
  for (double v : variances) s.data_variance += v;
  s.data_variance /= m;
  s.total_variance = s.knowledge_variance + s.data_variance;
  return s;
}

std::size_t validation_row_count(std::size_t rows, double validation_fraction) {
  auto n = static_cast<std::size_t>(std::llround(static_cast<double>(rows) * validation_fraction));
  if (n == 0 && rows > 1) n = 1;
  return std::min(n, rows == 0 ? 0 : rows - 1);
}

PreparedData prepare_training(const Eigen::MatrixXd& features, std::span<const double> targets,
                              double validation_fraction) {
  const auto rows = static_cast<std::size_t>(features.rows());
  require(rows == targets.size(), "feature rows and targets disagree");
  const std::size_t n_val = validation_row_count(rows, validation_fraction);
  if (n_val == 0) fail(ErrorKind::kTraining, "too few rows for a validation split");
  PreparedData p;
  p.train_rows = rows - n_val;
  const auto tr = static_cast<Eigen::Index>(p.train_rows);
  p.normaliser = FeatureNormaliser::fit(features.topRows(tr));
  p.target_scaler = TargetScaler::fit(targets.first(p.train_rows));
  const Eigen::MatrixXd normalised = p.normaliser.apply(features);
  p.split.train_x = normalised.topRows(tr);
  p.split.val_x = normalised.bottomRows(static_cast<Eigen::Index>(n_val));
  for (std::size_t i = 0; i < rows; ++i) {
    const double z = (targets[i] - p.target_scaler.mean) / p.target_scaler.scale;
    (i < p.train_rows ? p.split.train_y : p.split.val_y).push_back(z);
  }
  return p;
}

bool Ensemble::operator==(const Ensemble& other) const {
  return hyper == other.hyper && layout == other.layout && normaliser == other.normaliser &&
         target_scaler == other.target_scaler && members == other.members && validation_ids == other.validation_ids;
}

Ensemble train_ensemble(const ActorDataset& dataset, const MetricSeries& targets, const EnsembleHyper& hyper,
                        std::uint64_t base_seed, Execution execution) {
  hyper.validate();
  dataset.validate();
  AlignedData joined = inner_join(dataset, targets);
  if (joined.part_ids.empty()) {
    fail(ErrorKind::kInvalidArgument, "no part ids shared between actor " + dataset.actor_id + " and the metric");
  }
  PreparedData prepared = prepare_training(joined.features, joined.targets, hyper.validation_fraction);

  Ensemble ens;
  ens.hyper = hyper;
  ens.layout = {static_cast<std::size_t>(dataset.features.cols()), static_cast<std::size_t>(hyper.hidden_size)};
  ens.normaliser = prepared.normaliser;
  ens.target_scaler = prepared.target_scaler;
  ens.validation_ids.assign(joined.part_ids.begin() + static_cast<std::ptrdiff_t>(prepared.train_rows),
                            joined.part_ids.end());
  const TrainingSplit& split = prepared.split;

  const auto m_count = static_cast<std::size_t>(hyper.member_count);
  ens.members.resize(m_count);
  ens.training_log.resize(m_count);
  auto train_one = [&](std::size_t m) {
    Member init = init_member(ens.layout, base_seed + m);
    ens.members[m] = train_member(std::move(init), split, hyper, &ens.training_log[m]);
  };

  if (execution == Execution::kSequential) {
    for (std::size_t m = 0; m < m_count; ++m) train_one(m);
  } else {
    std::vector<std::exception_ptr> errors(m_count);
    {
      std::vector<std::jthread> workers;
      for (std::size_t m = 0; m < m_count; ++m) {
        workers.emplace_back([&, m] {
          try {
            train_one(m);
          } catch (...) {
            errors[m] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return ens;
}

PredictiveSummary predict(const Ensemble& ensemble, std::span<const double> x) {
  if (x.size() != ensemble.layout.inputs) {
    fail(ErrorKind::kInvalidArgument, "feature row arity " + std::to_string(x.size()) + " does not match ensemble input " +
                                          std::to_string(ensemble.layout.inputs));
  }
  std::vector<double> z(x.size());
  ensemble.normaliser.apply_row(x, z);
  const LogVarianceClamp clamp = clamp_of(ensemble.hyper);
  const double s = ensemble.target_scaler.scale;
  std::vector<double> means, variances;
  for (const auto& member : ensemble.members) {
    const HeadOutput out = forward(member, z, clamp);
    means.push_back(ensemble.target_scaler.mean + s * out.mean);
    variances.push_back(s * s * std::exp(out.log_variance));
  }
  return combine_members(means, variances);
}

double total_uncertainty(const Ensemble& ensemble, const ActorDataset& features) {
  if (ensemble.validation_ids.empty()) fail(ErrorKind::kInvalidArgument, "ensemble has no validation rows");
  std::unordered_map<std::string, Eigen::Index> row_of;
  for (std::size_t r = 0; r < features.rows(); ++r) row_of.emplace(features.part_ids[r], static_cast<Eigen::Index>(r));

  Eigen::MatrixXd raw(static_cast<Eigen::Index>(ensemble.validation_ids.size()), features.features.cols());
  for (std::size_t i = 0; i < ensemble.validation_ids.size(); ++i) {
    auto it = row_of.find(ensemble.validation_ids[i]);
    if (it == row_of.end()) fail(ErrorKind::kInvalidArgument, "validation part id missing: " + ensemble.validation_ids[i]);
    raw.row(static_cast<Eigen::Index>(i)) = features.features.row(it->second);
  }
  require(raw.cols() == static_cast<Eigen::Index>(ensemble.layout.inputs), "feature width does not match ensemble");

  const Eigen::MatrixXd z = ensemble.normaliser.apply(raw);
  const LogVarianceClamp clamp = clamp_of(ensemble.hyper);
  const double s = ensemble.target_scaler.scale;
  const auto rows = z.rows();
  const auto m_count = ensemble.members.size();
  Eigen::MatrixXd means(rows, static_cast<Eigen::Index>(m_count));
  Eigen::MatrixXd vars(rows, static_cast<Eigen::Index>(m_count));
  for (std::size_t m = 0; m < m_count; ++m) {
    const Eigen::MatrixXd out = forward_batch(ensemble.members[m], z, clamp);
    means.col(static_cast<Eigen::Index>(m)) = ensemble.target_scaler.mean + s * out.col(0).array();
    vars.col(static_cast<Eigen::Index>(m)) = s * s * out.col(1).array().exp();
  }
  double sum = 0.0;
  std::vector<double> mu(m_count), var(m_count);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (std::size_t m = 0; m < m_count; ++m) {
      mu[m] = means(r, static_cast<Eigen::Index>(m));
      var[m] = vars(r, static_cast<Eigen::Index>(m));
    }
    sum += combine_members(mu, var).total_variance;
  }
  return sum / static_cast<double>(rows);
}

namespace {

constexpr const char* kCheckpointFormat = "dcontrib-ensemble";
constexpr int kCheckpointVersion = 1;

}  // namespace

std::string ensemble_to_json(const Ensemble& e) {
  json members = json::array();
  for (std::size_t m = 0; m < e.members.size(); ++m) {
    json entry{{"seed", e.members[m].seed}, {"parameters", e.members[m].parameters()}};
    if (m < e.training_log.size()) {
      entry["best_epoch"] = e.training_log[m].best_epoch;
      entry["epochs_run"] = e.training_log[m].epochs_run;
    }
    members.push_back(std::move(entry));
  }
  json doc{{"format", kCheckpointFormat},
           {"version", kCheckpointVersion},
           {"layout", {{"inputs", e.layout.inputs}, {"hidden", e.layout.hidden}}},
           {"hyper", detail::hyper_to_json(e.hyper)},
           {"normaliser", {{"mean", e.normaliser.mean}, {"scale", e.normaliser.scale}}},
           {"target_scaler", {{"mean", e.target_scaler.mean}, {"scale", e.target_scaler.scale}}},
           {"validation_ids", e.validation_ids},
           {"members", std::move(members)}};
  return doc.dump(1);
}

Ensemble ensemble_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.at("format") != kCheckpointFormat) fail(ErrorKind::kParse, "not an ensemble checkpoint");
    if (doc.at("version") != kCheckpointVersion) fail(ErrorKind::kParse, "unsupported checkpoint version");
    Ensemble e;
    e.layout.inputs = doc.at("layout").at("inputs").get<std::size_t>();
    e.layout.hidden = doc.at("layout").at("hidden").get<std::size_t>();
    e.hyper = detail::hyper_from_json(doc.at("hyper"), EnsembleHyper{}, true);
    e.normaliser.mean = doc.at("normaliser").at("mean").get<std::vector<double>>();
    e.normaliser.scale = doc.at("normaliser").at("scale").get<std::vector<double>>();
    e.target_scaler.mean = doc.at("target_scaler").at("mean").get<double>();
    e.target_scaler.scale = doc.at("target_scaler").at("scale").get<double>();
    e.validation_ids = doc.at("validation_ids").get<std::vector<std::string>>();
    for (const auto& entry : doc.at("members")) {
      Member m = init_member(e.layout, entry.at("seed").get<std::uint64_t>());
      m.set_parameters(entry.at("parameters").get<std::vector<double>>());
      TrainingTrace t;
      t.best_epoch = entry.value("best_epoch", 0);
      t.epochs_run = entry.value("epochs_run", 0);
      e.members.push_back(std::move(m));
      e.training_log.push_back(std::move(t));
    }
    require(e.normaliser.mean.size() == e.layout.inputs, "normaliser width does not match layout");
    return e;
  } catch (const json::exception& ex) {
    fail(ErrorKind::kParse, std::string("malformed ensemble checkpoint: ") + ex.what());
  }
}

void save_ensemble(const Ensemble& ensemble, const std::filesystem::path& path) {
  write_text_file(path, ensemble_to_json(ensemble));
}

Ensemble load_ensemble(const std::filesystem::path& path) { return ensemble_from_json(read_text_file(path)); }

}  // namespace dcontrib
