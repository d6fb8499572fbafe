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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dcontrib/dataset.hpp"
#include "dcontrib/network.hpp"

namespace dcontrib {

/// Per-column z-score fitted on the training split. Zero-variance columns map to 0.
struct FeatureNormaliser {
  std::vector<double> mean;
  std::vector<double> scale;  // 0 marks a constant column

  static FeatureNormaliser fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  void apply_row(std::span<const double> in, std::span<double> out) const;
  bool operator==(const FeatureNormaliser&) const = default;
};

/// Standardises targets for training; predictions are mapped back to metric units.
struct TargetScaler {
  double mean = 0.0;
  double scale = 1.0;

  static TargetScaler fit(std::span<const double> y);
  bool operator==(const TargetScaler&) const = default;
};

/// Law-of-total-variance decomposition of the equal-weight mixture of member Gaussians.
struct PredictiveSummary {
  double mean = 0.0;
  double knowledge_variance = 0.0;
  double data_variance = 0.0;
  double total_variance = 0.0;
};

PredictiveSummary combine_members(std::span<const double> means, std::span<const double> variances);

/// First (1 - validation_fraction) of the rows train, the rest validate.
std::size_t validation_row_count(std::size_t rows, double validation_fraction);

/// Chronological split of joined rows plus normalisers fitted on the training part.
struct PreparedData {
  FeatureNormaliser normaliser;
  TargetScaler target_scaler;
  TrainingSplit split;  // normalised features, standardised targets
  std::size_t train_rows = 0;
};

PreparedData prepare_training(const Eigen::MatrixXd& features, std::span<const double> targets,
                              double validation_fraction);

struct Ensemble {
  EnsembleHyper hyper;
  Layout layout;
  FeatureNormaliser normaliser;
  TargetScaler target_scaler;
  std::vector<Member> members;
  std::vector<TrainingTrace> training_log;
  std::vector<std::string> validation_ids;

  bool operator==(const Ensemble& other) const;
};

enum class Execution { kSequential, kConcurrent };

/// Inner-joins `dataset` with `targets` on part id, splits chronologically and
/// trains `hyper.member_count` members with seeds base_seed + m on the same split.
Ensemble train_ensemble(const ActorDataset& dataset, const MetricSeries& targets, const EnsembleHyper& hyper,
                        std::uint64_t base_seed, Execution execution = Execution::kConcurrent);

/// `x` is a raw feature row; normalisation happens inside.
PredictiveSummary predict(const Ensemble& ensemble, std::span<const double> x);

/// Mean total variance over the ensemble's stored validation rows, read from
/// `features`. Takes no targets.
double total_uncertainty(const Ensemble& ensemble, const ActorDataset& features);

std::string ensemble_to_json(const Ensemble& ensemble);
Ensemble ensemble_from_json(const std::string& text);
void save_ensemble(const Ensemble& ensemble, const std::filesystem::path& path);
Ensemble load_ensemble(const std::filesystem::path& path);

}  // namespace dcontrib
