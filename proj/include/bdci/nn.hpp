#pragma once

// Dense ReLU network with a (mu, log sigma) Gaussian head, hand-derived
// backpropagation of the Gaussian negative log-likelihood, and Adam.
//
// Parameters live in one flat buffer.  Layer l occupies
//   W_l  (out x in, row-major)  followed by  b_l (out)
// which is also the on-disk order used by the bundle format.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "bdci/error.hpp"
#include "bdci/random.hpp"

namespace bdci::nn {

inline constexpr int kHiddenWidth = 128;
inline constexpr int kHiddenLayers = 6;
inline constexpr int kOutputs = 2;
inline constexpr std::size_t kMinTrainingSamples = 1000;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

// Parameter-shaped buffers are 64-byte aligned.  Every layer block starts at a
// multiple of 8 doubles, so Eigen takes the same vector/scalar split no matter
// where the heap put them; otherwise results drift in the last bit between
// otherwise identical runs.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

inline std::vector<int> standard_dims(int input_dim) {
  std::vector<int> dims{input_dim};
  dims.insert(dims.end(), kHiddenLayers, kHiddenWidth);
  dims.push_back(kOutputs);
  return dims;
}

class MLP {
 public:
  MLP() = default;

  /// Zero-initialised network with the given layer widths (input first).
  explicit MLP(std::vector<int> layer_dims) : dims_(std::move(layer_dims)) {
    if (dims_.size() < 2 || dims_.back() != kOutputs) {
      fail(ErrorCode::DimensionMismatch, "network must end in a 2-wide output layer");
    }
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      if (dims_[l] <= 0) fail(ErrorCode::DimensionMismatch, "layer widths must be positive");
      offsets_.push_back(off);
      off += static_cast<std::size_t>(dims_[l + 1]) * (static_cast<std::size_t>(dims_[l]) + 1);
    }
    offsets_.push_back(off);
    params_.assign(off, 0.0);
  }

  static MLP standard(int input_dim) { return MLP(standard_dims(input_dim)); }

  const std::vector<int>& layer_dims() const noexcept { return dims_; }
  int input_dim() const noexcept { return dims_.empty() ? 0 : dims_.front(); }
  std::size_t num_layers() const noexcept { return dims_.empty() ? 0 : dims_.size() - 1; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }

  std::size_t weight_offset(std::size_t l) const { return offsets_[l]; }
  std::size_t bias_offset(std::size_t l) const {
    return offsets_[l] + static_cast<std::size_t>(dims_[l + 1]) * dims_[l];
  }

  MatrixMap weights(std::size_t l) {
    return MatrixMap(params_.data() + weight_offset(l), dims_[l + 1], dims_[l]);
  }
  ConstMatrixMap weights(std::size_t l) const {
    return ConstMatrixMap(params_.data() + weight_offset(l), dims_[l + 1], dims_[l]);
  }
  VectorMap bias(std::size_t l) { return VectorMap(params_.data() + bias_offset(l), dims_[l + 1]); }
  ConstVectorMap bias(std::size_t l) const {
    return ConstVectorMap(params_.data() + bias_offset(l), dims_[l + 1]);
  }

  friend bool operator==(const MLP&, const MLP&) = default;

 private:
  std::vector<int> dims_;
  ParamVector params_;
  std::vector<std::size_t> offsets_;
};

struct Output {
  double mu = 0.0;
  double log_sigma = 0.0;
};

struct LogSigmaClamp {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  double apply(double v) const { return std::clamp(v, lo, hi); }
};

inline constexpr LogSigmaClamp kDefaultClamp{-10.0, 5.0};

inline double sigma_from(double log_sigma, LogSigmaClamp clamp = kDefaultClamp) {
  return std::exp(clamp.apply(log_sigma));
}

/// -log N(target | mu, exp(log_sigma)^2)
inline double nll_loss(double mu, double log_sigma, double target) {
  const double z = (target - mu) * std::exp(-log_sigma);
  return 0.5 * std::log(2.0 * std::numbers::pi) + log_sigma + 0.5 * z * z;
}

inline Output forward(const MLP& model, std::span<const double> input) {
  if (static_cast<int>(input.size()) != model.input_dim()) {
    fail(ErrorCode::DimensionMismatch, "network expects " + std::to_string(model.input_dim()) +
                                           " inputs, got " + std::to_string(input.size()));
  }
  Eigen::VectorXd a = ConstVectorMap(input.data(), static_cast<Eigen::Index>(input.size()));
  const std::size_t L = model.num_layers();
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::VectorXd z = model.weights(l) * a + model.bias(l);
    if (l + 1 < L) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return {a(0), a(1)};
}

/// Scratch buffers reused across mini-batches.
struct Workspace {
  std::vector<Eigen::MatrixXd> act;  // act[0] = inputs, act[l+1] = output of layer l
  std::vector<Eigen::MatrixXd> delta;
};

namespace detail {

inline void forward_batch(const MLP& model, Workspace& ws) {
  const std::size_t L = model.num_layers();
  ws.act.resize(L + 1);
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd& z = ws.act[l + 1];
    z.noalias() = model.weights(l) * ws.act[l];
    z.colwise() += model.bias(l);
    if (l + 1 < L) z = z.cwiseMax(0.0);
  }
}

}  // namespace detail

/// Mean loss over the batch held in `ws.act[0]` (one column per sample).
/// When `grad` is non-empty it receives the mean gradient.
inline double loss_and_gradient(const MLP& model, Workspace& ws, std::span<const double> targets,
                                std::span<double> grad, LogSigmaClamp clamp = {}) {
  const Eigen::Index B = ws.act[0].cols();
  if (static_cast<Eigen::Index>(targets.size()) != B) {
    fail(ErrorCode::DimensionMismatch, "one target per input column required");
  }
  if (ws.act[0].rows() != model.input_dim()) {
    fail(ErrorCode::DimensionMismatch, "input rows do not match the network");
  }
  detail::forward_batch(model, ws);
  const std::size_t L = model.num_layers();
  const Eigen::MatrixXd& out = ws.act[L];

  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const bool want_grad = !grad.empty();
  ws.delta.resize(L + 1);
  Eigen::MatrixXd& d_out = ws.delta[L];
  if (want_grad) d_out.resize(kOutputs, B);

  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(B);
  for (Eigen::Index j = 0; j < B; ++j) {
    const double mu = out(0, j);
    const double ls_raw = out(1, j);
    const double ls = clamp.apply(ls_raw);
    const double inv_var = std::exp(-2.0 * ls);
    const double r = targets[static_cast<std::size_t>(j)] - mu;
    total += half_log_2pi + ls + 0.5 * r * r * inv_var;
    if (want_grad) {
      d_out(0, j) = -r * inv_var * inv_b;
      const bool inside = ls_raw > clamp.lo && ls_raw < clamp.hi;
      d_out(1, j) = inside ? (1.0 - r * r * inv_var) * inv_b : 0.0;
    }
  }
  if (!want_grad) return total * inv_b;

  if (grad.size() != model.parameter_count()) {
    fail(ErrorCode::DimensionMismatch, "gradient buffer has the wrong size");
  }
  for (std::size_t l = L; l-- > 0;) {
    const Eigen::MatrixXd& d = ws.delta[l + 1];
    const Eigen::MatrixXd& a_prev = ws.act[l];
    MatrixMap gw(grad.data() + model.weight_offset(l), model.layer_dims()[l + 1],
                 model.layer_dims()[l]);
    gw.noalias() = d * a_prev.transpose();
    VectorMap(grad.data() + model.bias_offset(l), model.layer_dims()[l + 1]) = d.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd& d_prev = ws.delta[l];
      d_prev.noalias() = model.weights(l).transpose() * d;
      // ReLU subgradient at 0 is 0.
      d_prev.array() *= (a_prev.array() > 0.0).cast<double>();
    }
  }
  return total * inv_b;
}

/// Gradient of nll_loss(forward(model, input), target) for a single sample.
inline ParamVector backward(const MLP& model, std::span<const double> input, double target,
                                    LogSigmaClamp clamp = {}) {
  if (static_cast<int>(input.size()) != model.input_dim()) {
    fail(ErrorCode::DimensionMismatch, "network expects " + std::to_string(model.input_dim()) +
                                           " inputs, got " + std::to_string(input.size()));
  }
  Workspace ws;
  ws.act.resize(1);
  ws.act[0] = ConstVectorMap(input.data(), static_cast<Eigen::Index>(input.size()));
  ParamVector grad(model.parameter_count());
  const double t[1] = {target};
  loss_and_gradient(model, ws, t, grad, clamp);
  return grad;
}

struct AdamState {
  ParamVector m;
  ParamVector v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

inline void adam_step(MLP& model, std::span<const double> grads, AdamState& state,
                      double learning_rate) {
  auto params = model.parameters();
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    fail(ErrorCode::DimensionMismatch, "Adam state, gradient and parameters differ in shape");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= learning_rate * mhat / (std::sqrt(vhat) + state.eps);
  }
}

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 256;
  int max_epochs = 200;
  int patience = 20;
  std::uint64_t seed = 1;
  double log_sigma_lo = -10.0;
  double log_sigma_hi = 5.0;
  double validation_fraction = 0.1;
  // Step decay on validation plateaus.  Set factor to 1 to disable.
  int lr_decay_patience = 8;
  double lr_decay_factor = 0.5;
  double min_learning_rate = 1e-6;

  LogSigmaClamp clamp() const { return {log_sigma_lo, log_sigma_hi}; }

  void validate() const {
    if (!(learning_rate > 0.0)) fail(ErrorCode::InvalidArgument, "learning_rate must be > 0");
    if (batch_size < 1) fail(ErrorCode::InvalidArgument, "batch_size must be >= 1");
    if (max_epochs < 1) fail(ErrorCode::InvalidArgument, "max_epochs must be >= 1");
    if (patience < 1) fail(ErrorCode::InvalidArgument, "patience must be >= 1");
    if (!(validation_fraction > 0.0 && validation_fraction < 0.5)) {
      fail(ErrorCode::InvalidArgument, "validation_fraction must lie in (0, 0.5)");
    }
    if (!(log_sigma_lo < log_sigma_hi)) fail(ErrorCode::InvalidArgument, "empty log-sigma clamp");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0) || lr_decay_patience < 1) {
      fail(ErrorCode::InvalidArgument, "bad learning-rate decay settings");
    }
  }
};

/// Row-per-sample training pairs of one input width.
class TrainingSet {
 public:
  explicit TrainingSet(int input_dim) : dim_(input_dim) {}

  void add(std::span<const double> input, double target) {
    if (static_cast<int>(input.size()) != dim_) {
      fail(ErrorCode::DimensionMismatch, "training input has the wrong width");
    }
    inputs_.insert(inputs_.end(), input.begin(), input.end());
    targets_.push_back(target);
  }

  int input_dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return targets_.size(); }
  std::span<const double> input(std::size_t i) const {
    return {inputs_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  double target(std::size_t i) const { return targets_[i]; }

 private:
  int dim_;
  std::vector<double> inputs_;
  std::vector<double> targets_;
};

struct TrainReport {
  double train_nll = 0.0;  // mean over the last epoch's mini-batches
  double val_nll = 0.0;    // best validation NLL (the returned checkpoint)
  int epochs_run = 0;
  int best_epoch = 0;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
  double final_learning_rate = 0.0;
  std::vector<double> val_history;
};

struct TrainResult {
  MLP model;
  TrainReport report;
};

inline void init_parameters(MLP& model, Rng& rng) {
  const std::size_t L = model.num_layers();
  for (std::size_t l = 0; l < L; ++l) {
    const double fan_in = model.layer_dims()[l];
    // He-uniform for the hidden layers; the head starts nearly silent so the
    // initial prediction is the bias (set from the target marginal below).
    const double bound = (l + 1 < L) ? std::sqrt(6.0 / fan_in) : 0.01 * std::sqrt(1.0 / fan_in);
    auto w = model.weights(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-bound, bound);
    model.bias(l).setZero();
  }
}

namespace detail {

inline void gather(const TrainingSet& data, std::span<const std::size_t> idx, Workspace& ws,
                   std::vector<double>& targets) {
  const Eigen::Index dim = data.input_dim();
  ws.act.resize(1);
  ws.act[0].resize(dim, static_cast<Eigen::Index>(idx.size()));
  targets.resize(idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    ws.act[0].col(static_cast<Eigen::Index>(j)) =
        ConstVectorMap(data.input(idx[j]).data(), dim);
    targets[j] = data.target(idx[j]);
  }
}

inline double mean_nll(const MLP& model, const TrainingSet& data,
                       std::span<const std::size_t> idx, LogSigmaClamp clamp, Workspace& ws) {
  constexpr std::size_t kChunk = 1024;
  std::vector<double> targets;
  double total = 0.0;
  for (std::size_t s = 0; s < idx.size(); s += kChunk) {
    const auto chunk = idx.subspan(s, std::min(kChunk, idx.size() - s));
    gather(data, chunk, ws, targets);
    total += loss_and_gradient(model, ws, targets, {}, clamp) * static_cast<double>(chunk.size());
  }
  return total / static_cast<double>(idx.size());
}

}  // namespace detail

using ProgressFn = std::function<void(int epoch, double train_nll, double val_nll, double lr)>;

/// Mini-batch Adam on the Gaussian NLL with early stopping on a held-out
/// split.  Returns the best-validation checkpoint.  Single-threaded and fully
/// determined by (data order, config).
inline TrainResult train_category(const TrainingSet& data, const TrainConfig& config,
                                  const ProgressFn& progress = {}) {
  config.validate();
  if (data.size() < kMinTrainingSamples) {
    fail(ErrorCode::TooFewSamples, "need at least " + std::to_string(kMinTrainingSamples) +
                                       " samples, got " + std::to_string(data.size()));
  }
  Rng rng(config.seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const auto n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.validation_fraction * data.size())));
  const std::vector<std::size_t> val_idx(order.begin(), order.begin() + n_val);
  std::vector<std::size_t> train_idx(order.begin() + n_val, order.end());

  MLP model = MLP::standard(data.input_dim());
  init_parameters(model, rng);
  {
    // Start the head at the marginal distribution of the targets.
    double mean = 0.0, sq = 0.0;
    for (std::size_t i : train_idx) mean += data.target(i);
    mean /= static_cast<double>(train_idx.size());
    for (std::size_t i : train_idx) sq += (data.target(i) - mean) * (data.target(i) - mean);
    const double sd = std::sqrt(sq / static_cast<double>(train_idx.size()));
    auto head = model.bias(model.num_layers() - 1);
    head(0) = mean;
    head(1) = config.clamp().apply(std::log(std::max(sd, 1e-12)));
  }

  const LogSigmaClamp clamp = config.clamp();
  AdamState adam(model.parameter_count());
  ParamVector grad(model.parameter_count());
  std::vector<double> targets;
  Workspace ws, eval_ws;

  TrainReport report;
  report.train_size = train_idx.size();
  report.val_size = val_idx.size();
  double lr = config.learning_rate;
  double best_val = detail::mean_nll(model, data, val_idx, clamp, eval_ws);
  ParamVector best_params(model.parameters().begin(), model.parameters().end());
  int since_best = 0;

  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(train_idx);
    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < train_idx.size(); s += batch) {
      const auto idx = std::span<const std::size_t>(train_idx).subspan(
          s, std::min(batch, train_idx.size() - s));
      detail::gather(data, idx, ws, targets);
      const double loss = loss_and_gradient(model, ws, targets, grad, clamp);
      if (!std::isfinite(loss)) {
        fail(ErrorCode::DivergedLoss, "non-finite loss in epoch " + std::to_string(epoch) +
                                          " at sample offset " + std::to_string(s));
      }
      epoch_loss += loss * static_cast<double>(idx.size());
      adam_step(model, grad, adam, lr);
    }
    report.train_nll = epoch_loss / static_cast<double>(train_idx.size());
    const double val = detail::mean_nll(model, data, val_idx, clamp, eval_ws);
    if (!std::isfinite(val)) {
      fail(ErrorCode::DivergedLoss, "non-finite validation loss in epoch " + std::to_string(epoch));
    }
    report.val_history.push_back(val);
    report.epochs_run = epoch;
    if (val < best_val) {
      best_val = val;
      report.best_epoch = epoch;
      std::copy(model.parameters().begin(), model.parameters().end(), best_params.begin());
      since_best = 0;
    } else {
      ++since_best;
      if (since_best % config.lr_decay_patience == 0) {
        lr = std::max(config.min_learning_rate, lr * config.lr_decay_factor);
      }
    }
    if (progress) progress(epoch, report.train_nll, val, lr);
    if (since_best >= config.patience) break;
  }
  std::copy(best_params.begin(), best_params.end(), model.parameters().begin());
  report.val_nll = best_val;
  report.final_learning_rate = lr;
  return {std::move(model), std::move(report)};
}

}  // namespace bdci::nn
