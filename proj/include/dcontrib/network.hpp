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

// Two-headed feed-forward regressor (one ReLU hidden layer, dropout) trained
// with the heteroscedastic Gaussian negative log-likelihood.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace dcontrib {

enum class Activation { kRelu };

struct EnsembleHyper {
  int member_count = 5;
  int hidden_size = 50;
  Activation activation = Activation::kRelu;
  double dropout_rate = 0.5;
  int batch_size = 128;
  int patience_epochs = 100;
  int max_epochs = 2000;
  double learning_rate = 1e-3;
  double validation_fraction = 0.2;
  double log_variance_min = -10.0;
  double log_variance_max = 10.0;

  void validate() const;
  bool operator==(const EnsembleHyper&) const = default;
};

struct Layout {
  std::size_t inputs = 0;
  std::size_t hidden = 0;
  bool operator==(const Layout&) const = default;
};

struct LogVarianceClamp {
  double lo = -10.0;
  double hi = 10.0;
};

inline LogVarianceClamp clamp_of(const EnsembleHyper& h) { return {h.log_variance_min, h.log_variance_max}; }

/// One ensemble member: input -> hidden (ReLU, dropout) -> (mean, log-variance).
struct Member {
  Layout layout;
  std::uint64_t seed = 0;
  Eigen::MatrixXd w1;  // hidden x inputs
  Eigen::VectorXd b1;  // hidden
  Eigen::MatrixXd w2;  // 2 x hidden; row 0 = mean head, row 1 = log-variance head
  Eigen::VectorXd b2;  // 2

  std::size_t parameter_count() const;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);
  bool operator==(const Member& other) const;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases from `seed`.
Member init_member(Layout layout, std::uint64_t seed);

struct HeadOutput {
  double mean = 0.0;
  double log_variance = 0.0;
};

/// Training-mode dropout state; absent means evaluation mode.
struct Dropout {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;
};

HeadOutput forward(const Member& member, std::span<const double> x, LogVarianceClamp clamp,
                   const Dropout* dropout = nullptr);

/// Evaluation-mode forward of every row; returns rows x 2 (mean, clamped log-variance).
Eigen::MatrixXd forward_batch(const Member& member, const Eigen::MatrixXd& x, LogVarianceClamp clamp);

/// log(sigma^2)/2 + (y - mu)^2 / (2 sigma^2), constant dropped.
double nll_loss(double mean, double log_variance, double y);

struct Gradients {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;
  std::vector<double> flat() const;  // same order as Member::parameters()
};

/// Mean NLL over the rows of `x` and, if `grad` is set, its gradient. `mask`
/// (rows x hidden) multiplies the hidden activations when given.
double loss_and_gradient(const Member& member, const Eigen::MatrixXd& x, std::span<const double> y,
                         LogVarianceClamp clamp, const Eigen::MatrixXd* mask, Gradients* grad);

/// Tracks the best validation loss; stops after `patience` epochs without a strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Returns true when `loss` improves on the best seen so far.
  bool observe(int epoch, double loss);
  bool should_stop() const { return epochs_since_best_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_loss_ = 0.0;
  bool seen_ = false;
  int epochs_since_best_ = 0;
};

struct TrainingSplit {
  Eigen::MatrixXd train_x;
  std::vector<double> train_y;
  Eigen::MatrixXd val_x;
  std::vector<double> val_y;
};

struct TrainingTrace {
  std::vector<double> validation_loss;  // one per epoch run
  int best_epoch = 0;
  int epochs_run = 0;
};

/// Adam on mini-batches of the mean NLL; returns the parameters of the best
/// validation epoch. Deterministic in (member.seed, data, hyper).
Member train_member(Member member, const TrainingSplit& data, const EnsembleHyper& hyper,
                    TrainingTrace* trace = nullptr);

}  // namespace dcontrib
