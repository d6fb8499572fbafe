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

// Centralised benchmark: one regressor on all actors' joined features,
// explained with KernelSHAP and aggregated per company. exact_shapley is the
// brute-force reference for small feature counts.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dcontrib/dataset.hpp"
#include "dcontrib/ensemble.hpp"
#include "dcontrib/network.hpp"

namespace dcontrib {

struct FeatureRef {
  std::string actor_id;  // kSharedActorId for shared columns
  std::string column;
  bool operator==(const FeatureRef&) const = default;
};

struct CentralModel {
  EnsembleHyper hyper;
  Member member;
  FeatureNormaliser normaliser;
  TargetScaler target_scaler;
  std::vector<FeatureRef> feature_index;
  std::vector<std::string> train_ids;
  std::vector<std::string> validation_ids;
  Eigen::MatrixXd train_x;       // raw features
  Eigen::MatrixXd validation_x;  // raw features

  /// Mean-head prediction in metric units for raw feature rows.
  Eigen::VectorXd predict(const Eigen::MatrixXd& raw) const;
};

/// Joins all actors and the metric on part id (first actor's row order) and
/// trains one member. Shared columns enter once, owned by the "shared" pseudo-actor.
CentralModel train_central(const std::vector<ActorDataset>& actors, const MetricSeries& metric,
                           const EnsembleHyper& hyper, std::uint64_t seed);

/// Maps a rows x d matrix to d predictions.
using BatchModel = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

struct ShapExplanation {
  std::vector<double> phi;
  double base_value = 0.0;  // mean prediction over the background
  double prediction = 0.0;
};

/// Shapley value of a coalition game where absent features take background
/// values and the model output is averaged over the background rows.
double coalition_value(const BatchModel& model, std::span<const double> instance, const Eigen::MatrixXd& background,
                       std::uint64_t mask);

/// Kernel-weighted least squares over coalitions, with Σφ = f(x) - base enforced
/// exactly. Coalition sizes whose full enumeration fits the budget are enumerated;
/// the remaining budget is sampled with complement pairing.
ShapExplanation kernel_shap(const BatchModel& model, std::span<const double> instance,
                            const Eigen::MatrixXd& background, std::size_t sample_count, std::uint64_t seed);

inline constexpr std::size_t kExactShapleyMaxFeatures = 12;

ShapExplanation exact_shapley(const BatchModel& model, std::span<const double> instance,
                              const Eigen::MatrixXd& background);

struct ShapReport {
  std::vector<FeatureRef> feature_index;
  std::vector<std::string> instance_ids;
  Eigen::MatrixXd phi;  // instances x features
  std::vector<double> base_values;
  std::vector<double> predictions;
};

struct ShapOptions {
  std::size_t background_size = 100;
  std::size_t sample_count = 2048;
  std::size_t explain_limit = 100;  // first N validation rows
  std::uint64_t seed = 0;
};

ShapReport explain_central(const CentralModel& model, const ShapOptions& options);

/// Per actor: mean over instances of the sum of |φ| over that actor's features.
/// Actors appear in first-seen order of `feature_index`.
std::vector<std::pair<std::string, double>> aggregate_company(const Eigen::MatrixXd& phi,
                                                              const std::vector<FeatureRef>& feature_index);
std::vector<std::pair<std::string, double>> aggregate_company(const ShapReport& report);

std::string shap_values_csv(const ShapReport& report);
std::string shap_instances_csv(const ShapReport& report);
std::string shap_summary_csv(const std::vector<std::pair<std::string, double>>& summary);
std::vector<std::pair<std::string, double>> load_shap_summary_csv(const std::filesystem::path& path);

}  // namespace dcontrib
