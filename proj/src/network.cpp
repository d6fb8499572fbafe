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

#include "dcontrib/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dcontrib/error.hpp"
#include "dcontrib/util.hpp"

namespace dcontrib {

void EnsembleHyper::validate() const {
  require(member_count >= 2, "member_count must be >= 2");
  require(hidden_size >= 1, "hidden_size must be >= 1");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout_rate must be in [0, 1)");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(patience_epochs >= 1, "patience_epochs must be >= 1");
  require(max_epochs >= 1, "max_epochs must be >= 1");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be > 0");
  require(validation_fraction > 0.0 && validation_fraction < 1.0, "validation_fraction must be in (0, 1)");
  require(log_variance_min < log_variance_max, "log-variance clamp needs lo < hi");
}

std::size_t Member::parameter_count() const {
  return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
}

namespace {

template <typename Block>
void append(std::vector<double>& out, const Block& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data()[i]);
}

template <typename Block>
void take(std::span<const double>& in, Block& m) {
  std::copy_n(in.begin(), m.size(), m.data());
  in = in.subspan(static_cast<std::size_t>(m.size()));
}

inline double clamp_value(double v, LogVarianceClamp c) { return std::clamp(v, c.lo, c.hi); }

}  // namespace

std::vector<double> Member::parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  append(out, w1);
  append(out, b1);
  append(out, w2);
  append(out, b2);
  return out;
}

void Member::set_parameters(std::span<const double> flat) {
  require(flat.size() == parameter_count(), "parameter vector has wrong length");
  take(flat, w1);
  take(flat, b1);
  take(flat, w2);
  take(flat, b2);
}

bool Member::operator==(const Member& other) const {
  return layout == other.layout && seed == other.seed && parameters() == other.parameters();
}

std::vector<double> Gradients::flat() const {
  std::vector<double> out;
  append(out, w1);
  append(out, b1);
  append(out, w2);
  append(out, b2);
  return out;
}

Member init_member(Layout layout, std::uint64_t seed) {
  require(layout.inputs > 0 && layout.hidden > 0, "layout sizes must be positive");
  Member m;
  m.layout = layout;
  m.seed = seed;
  const auto in = static_cast<Eigen::Index>(layout.inputs);
  const auto hid = static_cast<Eigen::Index>(layout.hidden);
  std::mt19937_64 rng(mix_seed(seed, 0x1417u));
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(layout.inputs));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(layout.hidden));
  std::uniform_real_distribution<double> u1(-bound1, bound1);
  std::uniform_real_distribution<double> u2(-bound2, bound2);
  m.w1.resize(hid, in);
  m.b1.resize(hid);
  m.w2.resize(2, hid);
  m.b2.resize(2);
  for (Eigen::Index i = 0; i < m.w1.size(); ++i) m.w1.data()[i] = u1(rng);
  for (Eigen::Index i = 0; i < m.b1.size(); ++i) m.b1[i] = u1(rng);
  for (Eigen::Index i = 0; i < m.w2.size(); ++i) m.w2.data()[i] = u2(rng);
  for (Eigen::Index i = 0; i < m.b2.size(); ++i) m.b2[i] = u2(rng);
  return m;
}

HeadOutput forward(const Member& member, std::span<const double> x, LogVarianceClamp clamp,
                   const Dropout* dropout) {
  if (x.size() != member.layout.inputs) {
    fail(ErrorKind::kInvalidArgument, "input arity " + std::to_string(x.size()) + " does not match layout " +
                                          std::to_string(member.layout.inputs));
  }
  Eigen::Map<const Eigen::VectorXd> in(x.data(), static_cast<Eigen::Index>(x.size()));
  Eigen::VectorXd hidden = (member.w1 * in + member.b1).cwiseMax(0.0);
  if (dropout && dropout->rate > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - dropout->rate);
    for (Eigen::Index i = 0; i < hidden.size(); ++i) {
      hidden[i] *= u(*dropout->rng) < dropout->rate ? 0.0 : keep_scale;
    }
  }
  Eigen::Vector2d out = member.w2 * hidden + member.b2;
  return {out[0], clamp_value(out[1], clamp)};
}

Eigen::MatrixXd forward_batch(const Member& member, const Eigen::MatrixXd& x, LogVarianceClamp clamp) {
  if (x.cols() != static_cast<Eigen::Index>(member.layout.inputs)) {
    fail(ErrorKind::kInvalidArgument, "input arity does not match layout");
  }
  Eigen::MatrixXd hidden = ((x * member.w1.transpose()).rowwise() + member.b1.transpose()).cwiseMax(0.0);
  Eigen::MatrixXd out = (hidden * member.w2.transpose()).rowwise() + member.b2.transpose();
  for (Eigen::Index r = 0; r < out.rows(); ++r) out(r, 1) = clamp_value(out(r, 1), clamp);
  return out;
}

double nll_loss(double mean, double log_variance, double y) {
  const double diff = y - mean;
  return 0.5 * log_variance + 0.5 * diff * diff * std::exp(-log_variance);
}

double loss_and_gradient(const Member& member, const Eigen::MatrixXd& x, std::span<const double> y,
                         LogVarianceClamp clamp, const Eigen::MatrixXd* mask, Gradients* grad) {
  const Eigen::Index rows = x.rows();
  require(rows > 0 && static_cast<std::size_t>(rows) == y.size(), "batch rows and targets disagree");
  require(x.cols() == static_cast<Eigen::Index>(member.layout.inputs), "input arity does not match layout");

  Eigen::MatrixXd pre = (x * member.w1.transpose()).rowwise() + member.b1.transpose();
  Eigen::MatrixXd active = pre.cwiseMax(0.0);
  if (mask) active.array() *= mask->array();
  Eigen::MatrixXd out = (active * member.w2.transpose()).rowwise() + member.b2.transpose();

  const double inv_rows = 1.0 / static_cast<double>(rows);
  double loss = 0.0;
  Eigen::MatrixXd d_out(rows, 2);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double raw = out(r, 1);
    const double s = clamp_value(raw, clamp);
    const double diff = y[static_cast<std::size_t>(r)] - out(r, 0);
    const double inv_var = std::exp(-s);
    loss += 0.5 * s + 0.5 * diff * diff * inv_var;
    d_out(r, 0) = -diff * inv_var * inv_rows;
    const bool clamped = raw < clamp.lo || raw > clamp.hi;
    d_out(r, 1) = clamped ? 0.0 : (0.5 - 0.5 * diff * diff * inv_var) * inv_rows;
  }
  loss *= inv_rows;

  if (grad) {
    grad->w2 = d_out.transpose() * active;
    grad->b2 = d_out.colwise().sum().transpose();
    Eigen::MatrixXd d_hidden = d_out * member.w2;
    if (mask) d_hidden.array() *= mask->array();
    d_hidden.array() *= (pre.array() > 0.0).cast<double>();
    grad->w1 = d_hidden.transpose() * x;
    grad->b1 = d_hidden.colwise().sum().transpose();
  }
  return loss;
}

bool EarlyStopping::observe(int epoch, double loss) {
  if (!seen_ || loss < best_loss_) {
    seen_ = true;
    best_loss_ = loss;
    best_epoch_ = epoch;
    epochs_since_best_ = 0;
    return true;
  }
  ++epochs_since_best_;
  return false;
}

namespace {

struct AdamState {
  Eigen::ArrayXXd m;
  Eigen::ArrayXXd v;
};

class Adam {
 public:
  explicit Adam(double lr) : lr_(lr) {}

  template <typename Param, typename Grad>
  void step(Param& param, const Grad& grad, AdamState& state) {
    if (state.m.size() == 0) {
      state.m = Eigen::ArrayXXd::Zero(param.rows(), param.cols());
      state.v = Eigen::ArrayXXd::Zero(param.rows(), param.cols());
    }
    state.m = kBeta1 * state.m + (1.0 - kBeta1) * grad.array();
    state.v = kBeta2 * state.v + (1.0 - kBeta2) * grad.array().square();
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    param.array() -= lr_ * (state.m / c1) / ((state.v / c2).sqrt() + kEps);
  }

  void tick() { ++t_; }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  double lr_;
  double t_ = 0.0;
};

double mean_nll(const Member& member, const Eigen::MatrixXd& x, const std::vector<double>& y,
                LogVarianceClamp clamp) {
  const Eigen::MatrixXd out = forward_batch(member, x, clamp);
  double sum = 0.0;
  for (Eigen::Index r = 0; r < out.rows(); ++r) sum += nll_loss(out(r, 0), out(r, 1), y[static_cast<std::size_t>(r)]);
  return sum / static_cast<double>(out.rows());
}

}  // namespace

Member train_member(Member member, const TrainingSplit& data, const EnsembleHyper& hyper, TrainingTrace* trace) {
  hyper.validate();
  const auto n = static_cast<std::size_t>(data.train_x.rows());
  require(n == data.train_y.size(), "training rows and targets disagree");
  require(static_cast<std::size_t>(data.val_x.rows()) == data.val_y.size() && !data.val_y.empty(),
          "validation split is empty");
  if (n < 2 * static_cast<std::size_t>(hyper.batch_size)) {
    fail(ErrorKind::kTraining, "need at least " + std::to_string(2 * hyper.batch_size) +
                                   " training rows, have " + std::to_string(n));
  }
  require(data.train_x.cols() == static_cast<Eigen::Index>(member.layout.inputs), "feature width does not match layout");

  const LogVarianceClamp clamp = clamp_of(hyper);
  std::mt19937_64 shuffle_rng(mix_seed(member.seed, 0x5u));
  std::mt19937_64 dropout_rng(mix_seed(member.seed, 0xD0u));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - hyper.dropout_rate);

  Adam adam(hyper.learning_rate);
  AdamState sw1, sb1, sw2, sb2;
  EarlyStopping stopper(hyper.patience_epochs);
  Member best = member;
  TrainingTrace local;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto width = data.train_x.cols();
  const auto hidden = static_cast<Eigen::Index>(member.layout.hidden);
  Eigen::MatrixXd batch_x;
  Eigen::MatrixXd mask;
  std::vector<double> batch_y;
  Gradients grad;

  for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(hyper.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(hyper.batch_size));
      const auto rows = static_cast<Eigen::Index>(stop - start);
      batch_x.resize(rows, width);
      batch_y.resize(static_cast<std::size_t>(rows));
      for (Eigen::Index r = 0; r < rows; ++r) {
        const std::size_t src = order[start + static_cast<std::size_t>(r)];
        batch_x.row(r) = data.train_x.row(static_cast<Eigen::Index>(src));
        batch_y[static_cast<std::size_t>(r)] = data.train_y[src];
      }
      const Eigen::MatrixXd* mask_ptr = nullptr;
      if (hyper.dropout_rate > 0.0) {
        mask.resize(rows, hidden);
        for (Eigen::Index i = 0; i < mask.size(); ++i) {
          mask.data()[i] = unit(dropout_rng) < hyper.dropout_rate ? 0.0 : keep_scale;
        }
        mask_ptr = &mask;
      }
      const double loss = loss_and_gradient(member, batch_x, batch_y, clamp, mask_ptr, &grad);
      if (!std::isfinite(loss)) {
        fail(ErrorKind::kTraining, "non-finite training loss at epoch " + std::to_string(epoch));
      }
      adam.tick();
      adam.step(member.w1, grad.w1, sw1);
      adam.step(member.b1, grad.b1, sb1);
      adam.step(member.w2, grad.w2, sw2);
      adam.step(member.b2, grad.b2, sb2);
    }

    const double val = mean_nll(member, data.val_x, data.val_y, clamp);
    if (!std::isfinite(val)) {
      fail(ErrorKind::kTraining, "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    local.validation_loss.push_back(val);
    local.epochs_run = epoch;
    if (stopper.observe(epoch, val)) best = member;
    if (stopper.should_stop()) break;
  }
  local.best_epoch = stopper.best_epoch();
  if (trace) *trace = std::move(local);
  return best;
}

}  // namespace dcontrib
