#pragma once

// Unsupervised training loop: shuffle, build two augmented views per sample,
// encode, batch-normalize, evaluate the contrastive/alignment objective and
// take a plain SGD step on the shapelets.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "csl/augment.hpp"
#include "csl/data.hpp"
#include "csl/encoder.hpp"
#include "csl/error.hpp"
#include "csl/objective.hpp"

namespace csl {

// Per-feature standardization without a learned affine transform.
struct BatchNormState {
  Vector running_mean;
  Vector running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(Index features, double mom = 0.1, double eps = 1e-5)
      : running_mean(Vector::Zero(features)), running_var(Vector::Ones(features)), momentum(mom), epsilon(eps) {}
};

enum class BatchNormMode { train, infer };

struct BatchNormOutput {
  Matrix y;
  Vector inv_std;  // 1 / sqrt(var + eps) used for each feature
};

// Train mode normalizes with the batch mean and biased variance and moves the
// running statistics towards the batch mean and unbiased variance.
inline BatchNormOutput batchnorm(const Matrix& z, BatchNormState& state, BatchNormMode mode) {
  if (state.running_mean.size() != z.cols()) throw ShapeError("batchnorm width does not match embedding width");
  BatchNormOutput out;
  if (mode == BatchNormMode::infer) {
    out.inv_std = (state.running_var.array() + state.epsilon).rsqrt().matrix();
    out.y = (z.rowwise() - state.running_mean.transpose()).array().rowwise() * out.inv_std.transpose().array();
    return out;
  }
  const Index b = z.rows();
  if (b < 2) throw ShapeError("batchnorm in train mode needs a batch of at least 2");
  const Vector mean = z.colwise().mean().transpose();
  const Matrix centered = z.rowwise() - mean.transpose();
  const Vector var = centered.array().square().colwise().sum().matrix().transpose() / static_cast<double>(b);
  out.inv_std = (var.array() + state.epsilon).rsqrt().matrix();
  out.y = centered.array().rowwise() * out.inv_std.transpose().array();
  const double m = state.momentum;
  state.running_mean = (1.0 - m) * state.running_mean + m * mean;
  state.running_var = (1.0 - m) * state.running_var + m * var * (static_cast<double>(b) / static_cast<double>(b - 1));
  return out;
}

// Backward of train-mode batchnorm given its output y and inv_std.
inline Matrix batchnorm_backward(const Matrix& dy, const BatchNormOutput& fwd) {
  const Vector mean_dy = dy.colwise().mean().transpose();
  const Vector mean_dy_y = dy.cwiseProduct(fwd.y).colwise().mean().transpose();
  Matrix dx = dy.rowwise() - mean_dy.transpose();
  dx -= (fwd.y.array().rowwise() * mean_dy_y.transpose().array()).matrix();
  return dx.array().rowwise() * fwd.inv_std.transpose().array();
}

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.0;
  int batch_size = 8;
  int epochs = 400;
  std::uint64_t seed = 0;
  bool early_stop = true;
  int early_stop_window = 20;
  double early_stop_tol = 1e-4;
  bool init_from_data = false;
  LossConfig loss;
  EncoderConfig encoder;
  AugmentConfig augment;

  void validate() const {
    if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
    if (batch_size < 2) throw ConfigError("batch size must be >= 2");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (early_stop_window < 1) throw ConfigError("early-stop window must be >= 1");
    loss.validate();
    augment.validate();
  }
};

struct StepRecord {
  int epoch = 0;
  int step = 0;
  double coarse = 0.0;
  double fine = 0.0;
  double alignment = 0.0;
  double total = 0.0;
};

struct TrainResult {
  ModelParams params;
  BatchNormState batchnorm;
  std::vector<StepRecord> steps;
  std::vector<double> epoch_loss;  // mean total loss per epoch
  int epochs_run = 0;
  bool stopped_early = false;
};

// The objective on one pair of already-augmented batches, as a function of
// the shapelets. Batchnorm runs in train mode on a copy of `bn`, so calling
// this leaves every argument untouched.
struct BatchObjective {
  LossBreakdown loss;
  ParamGrads grads;
  BatchNormState bn_after;
  // Matched window of every (sample, view, feature); with the covariance
  // signs in `loss` this identifies the differentiable piece being evaluated.
  std::vector<Index> match_starts;
};

inline BatchObjective evaluate_batch(const ModelParams& params, std::span<const Series> view1,
                                     std::span<const Series> view2, const BatchNormState& bn,
                                     const AccumulatorSet& accs, const LossConfig& loss_cfg, bool with_grad = true) {
  if (view1.size() != view2.size()) throw ShapeError("views have different batch sizes");
  const std::size_t b = view1.size();
  const Index width = params.config.d_repr;
  std::vector<EncodeTrace> t1, t2;
  t1.reserve(b);
  t2.reserve(b);
  Matrix z1(static_cast<Index>(b), width), z2(static_cast<Index>(b), width);
  for (std::size_t i = 0; i < b; ++i) {
    t1.push_back(encode_traced(view1[i], params));
    t2.push_back(encode_traced(view2[i], params));
    z1.row(static_cast<Index>(i)) = t1.back().z.transpose();
    z2.row(static_cast<Index>(i)) = t2.back().z.transpose();
  }

  BatchObjective out;
  for (const auto* tr : {&t1, &t2})
    for (const auto& t : *tr)
      for (const auto& m : t.matches) out.match_starts.push_back(m.start);
  out.bn_after = bn;
  const auto n1 = batchnorm(z1, out.bn_after, BatchNormMode::train);
  const auto n2 = batchnorm(z2, out.bn_after, BatchNormMode::train);
  out.loss = total_loss(n1.y, n2.y, params.config.num_scales, accs, loss_cfg, with_grad);
  if (!with_grad) return out;

  const Matrix d1 = batchnorm_backward(out.loss.grad1, n1);
  const Matrix d2 = batchnorm_backward(out.loss.grad2, n2);
  out.grads = zero_grads(params);
  // fixed sample order keeps the reduction deterministic
  for (std::size_t i = 0; i < b; ++i) {
    accumulate_backward(view1[i], params, t1[i], d1.row(static_cast<Index>(i)).transpose(), out.grads);
    accumulate_backward(view2[i], params, t2[i], d2.row(static_cast<Index>(i)).transpose(), out.grads);
  }
  return out;
}

inline void sgd_step(ModelParams& params, const ParamGrads& grads, double lr, double momentum, ParamGrads& velocity) {
  for (std::size_t f = 0; f < params.shapelets.size(); ++f) {
    if (momentum > 0.0) {
      velocity[f] = momentum * velocity[f] + grads[f];
      params.shapelets[f] -= lr * velocity[f];
    } else {
      params.shapelets[f] -= lr * grads[f];
    }
  }
}

// Completes encoder dims and reference length from the data when unset.
inline EncoderConfig resolve_encoder(EncoderConfig cfg, std::span<const Series> data) {
  if (data.empty()) throw ShapeError("dataset is empty");
  if (cfg.dims == 0) cfg.dims = data.front().dims();
  if (cfg.reference_length == 0) {
    Index t = data.front().length();
    for (const auto& s : data) t = std::min(t, s.length());
    cfg.reference_length = t;
  }
  cfg.validate();
  return cfg;
}

using EpochCallback = std::function<void(int epoch, double loss)>;

// Trains on unlabeled samples; labels are not part of the interface.
inline TrainResult train(std::span<const Series> data, TrainConfig cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (data.size() < 2) throw ShapeError("training needs at least 2 samples");
  cfg.encoder = resolve_encoder(cfg.encoder, data);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].dims() != cfg.encoder.dims) throw ShapeError("sample " + std::to_string(i) + " has a different dimension count");
    if (data[i].length() < cfg.encoder.max_length())
      throw ShapeError("sample " + std::to_string(i) + " is shorter than the longest shapelet");
  }

  Rng rng(cfg.seed);
  TrainResult res;
  res.params = cfg.init_from_data ? init_params_from_data(cfg.encoder, data, rng) : init_params(cfg.encoder, rng);
  res.batchnorm = BatchNormState(cfg.encoder.d_repr);
  ParamGrads velocity = zero_grads(res.params);

  const int scales = cfg.encoder.num_scales;
  const Index block = cfg.encoder.block_size();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), data.size());

  int step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    AccumulatorSet accs = make_accumulators(scales, block);
    double epoch_total = 0.0;
    int batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t size = std::min(batch, order.size() - begin);
      if (size < 2) continue;
      std::vector<Series> v1, v2;
      v1.reserve(size);
      v2.reserve(size);
      for (std::size_t i = begin; i < begin + size; ++i) {
        auto [a, b] = sample_pair(data[order[i]], cfg.augment, rng);
        v1.push_back(std::move(a));
        v2.push_back(std::move(b));
      }
      ++step;
      BatchObjective obj;
      try {
        obj = evaluate_batch(res.params, v1, v2, res.batchnorm, accs, cfg.loss);
      } catch (const Error& e) {
        throw Error("epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ": " + e.what());
      }
      if (!std::isfinite(obj.loss.total))
        throw Error("epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ": loss is not finite");
      res.batchnorm = std::move(obj.bn_after);
      accs = std::move(obj.loss.next);
      sgd_step(res.params, obj.grads, cfg.lr, cfg.momentum, velocity);
      res.steps.push_back({epoch, step, obj.loss.coarse, obj.loss.fine, obj.loss.alignment, obj.loss.total});
      epoch_total += obj.loss.total;
      ++batches;
    }
    const double mean_loss = batches ? epoch_total / batches : 0.0;
    res.epoch_loss.push_back(mean_loss);
    res.epochs_run = epoch;
    if (on_epoch) on_epoch(epoch, mean_loss);

    // Stop once the moving average over the last window improves on the
    // previous window by less than early_stop_tol (relative).
    const auto w = static_cast<std::size_t>(cfg.early_stop_window);
    if (cfg.early_stop && res.epoch_loss.size() >= 2 * w) {
      const auto end = res.epoch_loss.end();
      const double recent = std::accumulate(end - static_cast<std::ptrdiff_t>(w), end, 0.0) / static_cast<double>(w);
      const double before = std::accumulate(end - static_cast<std::ptrdiff_t>(2 * w), end - static_cast<std::ptrdiff_t>(w), 0.0) /
                            static_cast<double>(w);
      if ((before - recent) < cfg.early_stop_tol * std::abs(before)) {
        res.stopped_early = true;
        break;
      }
    }
  }
  return res;
}

// Inference-mode embeddings, one row per sample in input order.
inline Matrix encode_dataset(std::span<const Series> data, const ModelParams& params, const BatchNormState& bn) {
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data[i].length() < params.config.max_length())
      throw ShapeError("sample " + std::to_string(i) + " is shorter than the longest shapelet");
  BatchNormState copy = bn;
  return batchnorm(encode_batch(data, params), copy, BatchNormMode::infer).y;
}

}  // namespace csl
