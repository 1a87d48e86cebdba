#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "csl/synthetic.hpp"
#include "csl/train.hpp"

namespace csl {
namespace {

Matrix RandomMatrix(Rng& rng, Index rows, Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

TrainConfig SmallConfig(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.epochs = 5;
  cfg.batch_size = 8;
  cfg.early_stop = false;
  cfg.encoder.num_scales = 2;
  cfg.encoder.d_repr = 12;
  cfg.encoder.max_length_frac = 0.4;
  return cfg;
}

Dataset SmallMotifs(std::uint64_t seed, int per_class = 8) {
  synthetic::MotifOptions opt;
  opt.per_class = per_class;
  opt.length = 40;
  opt.motif_length = 10;
  return znormalize(synthetic::planted_motifs(opt, seed));
}

TEST(BatchNorm, TrainModeStandardizes) {
  Rng rng(1);
  Matrix z = RandomMatrix(rng, 16, 5);
  z.col(2) = z.col(2) * 7.0 + Vector::Constant(16, 3.0);
  BatchNormState state(5);
  const auto out = batchnorm(z, state, BatchNormMode::train);
  for (Index j = 0; j < 5; ++j) {
    EXPECT_NEAR(out.y.col(j).mean(), 0.0, 1e-12);
    EXPECT_NEAR(out.y.col(j).squaredNorm() / 16.0, 1.0, 1e-4);
  }
}

TEST(BatchNorm, InferWithFreshStateIsNearIdentity) {
  Rng rng(2);
  const Matrix z = RandomMatrix(rng, 4, 3);
  BatchNormState state(3);
  const auto out = batchnorm(z, state, BatchNormMode::infer);
  EXPECT_LT((out.y - z / std::sqrt(1.0 + 1e-5)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(state.running_mean, Vector::Zero(3));
}

TEST(BatchNorm, RunningStatisticsRecurrence) {
  Rng rng(3);
  const Matrix a = RandomMatrix(rng, 6, 2), b = RandomMatrix(rng, 6, 2);
  BatchNormState state(2);
  batchnorm(a, state, BatchNormMode::train);
  batchnorm(b, state, BatchNormMode::train);
  for (Index j = 0; j < 2; ++j) {
    double mean = 0.0, var = 1.0;
    for (const Matrix* m : {&a, &b}) {
      const auto col = m->col(j);
      const double mu = col.mean();
      double ss = 0.0;
      for (Index i = 0; i < 6; ++i) ss += (col(i) - mu) * (col(i) - mu);
      mean = 0.9 * mean + 0.1 * mu;
      var = 0.9 * var + 0.1 * ss / 5.0;
    }
    EXPECT_NEAR(state.running_mean(j), mean, 1e-12);
    EXPECT_NEAR(state.running_var(j), var, 1e-12);
  }
}

TEST(BatchNorm, Errors) {
  BatchNormState state(3);
  EXPECT_THROW(batchnorm(Matrix::Ones(1, 3), state, BatchNormMode::train), ShapeError);
  EXPECT_THROW(batchnorm(Matrix::Ones(4, 2), state, BatchNormMode::train), ShapeError);
}

TEST(BatchNorm, BackwardMatchesFiniteDifferences) {
  Rng rng(4);
  const Matrix z = RandomMatrix(rng, 5, 3), w = RandomMatrix(rng, 5, 3);
  const auto f = [&](const Matrix& x) {
    BatchNormState s(3);
    return batchnorm(x, s, BatchNormMode::train).y.cwiseProduct(w).sum();
  };
  BatchNormState s(3);
  const Matrix g = batchnorm_backward(w, batchnorm(z, s, BatchNormMode::train));
  Matrix x = z;
  const double h = 1e-6;
  for (Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double fp = f(x);
    x.data()[i] = keep - h;
    const double fm = f(x);
    x.data()[i] = keep;
    EXPECT_NEAR(g.data()[i], (fp - fm) / (2 * h), 1e-6);
  }
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const auto ds = SmallMotifs(1);
  auto cfg = SmallConfig(3);
  cfg.lr = 0.0;
  const auto res = train(ds.samples, cfg);
  Rng rng(cfg.seed);
  const auto init = init_params(resolve_encoder(cfg.encoder, ds.samples), rng);
  ASSERT_EQ(res.params.shapelets.size(), init.shapelets.size());
  for (std::size_t f = 0; f < init.shapelets.size(); ++f) EXPECT_EQ(res.params.shapelets[f], init.shapelets[f]);
}

TEST(Train, LossDecreasesOnSyntheticData) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto ds = SmallMotifs(seed);
    auto cfg = SmallConfig(seed);
    cfg.epochs = 50;
    const auto res = train(ds.samples, cfg);
    ASSERT_EQ(res.epoch_loss.size(), 50u);
    EXPECT_LT(res.epoch_loss.back(), res.epoch_loss.front()) << "seed " << seed;
  }
}

// Replays the first step of train(): same RNG stream, one batch covering the data.
TEST(Train, FirstStepIsPlainGradientDescent) {
  const auto ds = SmallMotifs(2, 4);
  auto cfg = SmallConfig(5);
  cfg.epochs = 1;
  cfg.lr = 0.05;
  const auto res = train(ds.samples, cfg);

  Rng rng(cfg.seed);
  const auto enc = resolve_encoder(cfg.encoder, ds.samples);
  auto params = init_params(enc, rng);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Series> v1, v2;
  for (const auto i : order) {
    auto [a, b] = sample_pair(ds.samples[i], cfg.augment, rng);
    v1.push_back(std::move(a));
    v2.push_back(std::move(b));
  }
  const auto accs = make_accumulators(enc.num_scales, enc.block_size());
  const auto obj = evaluate_batch(params, v1, v2, BatchNormState(enc.d_repr), accs, cfg.loss);
  ASSERT_EQ(res.steps.size(), 1u);
  EXPECT_DOUBLE_EQ(res.steps[0].total, obj.loss.total);

  // finite differences over a sample of coordinates
  const double h = 1e-6;
  double diff = 0.0, scale = 0.0;
  for (std::size_t f = 0; f < params.shapelets.size(); f += 3) {
    Matrix& s = params.shapelets[f];
    for (Index i = 0; i < s.size(); i += 2) {
      const double keep = s.data()[i];
      s.data()[i] = keep + h;
      const auto plus = evaluate_batch(params, v1, v2, BatchNormState(enc.d_repr), accs, cfg.loss, false);
      s.data()[i] = keep - h;
      const auto minus = evaluate_batch(params, v1, v2, BatchNormState(enc.d_repr), accs, cfg.loss, false);
      s.data()[i] = keep;
      if (plus.match_starts != obj.match_starts || minus.match_starts != obj.match_starts) continue;
      const double n = (plus.loss.total - minus.loss.total) / (2 * h);
      diff = std::max(diff, std::abs(n - obj.grads[f].data()[i]));
      scale = std::max({scale, std::abs(n), std::abs(obj.grads[f].data()[i])});
    }
  }
  ASSERT_GT(scale, 0.0);
  EXPECT_LT(diff / scale, 1e-3);

  for (std::size_t f = 0; f < params.shapelets.size(); ++f) {
    const Matrix expected = params.shapelets[f] - cfg.lr * obj.grads[f];
    EXPECT_LT((res.params.shapelets[f] - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Train, DeterministicUnderSeed) {
  const auto ds = SmallMotifs(3);
  const auto a = train(ds.samples, SmallConfig(11));
  const auto b = train(ds.samples, SmallConfig(11));
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  for (std::size_t f = 0; f < a.params.shapelets.size(); ++f) EXPECT_EQ(a.params.shapelets[f], b.params.shapelets[f]);
  const auto c = train(ds.samples, SmallConfig(12));
  EXPECT_NE(a.epoch_loss, c.epoch_loss);
}

TEST(Train, UndersizedFinalBatchIsSkipped) {
  const auto ds = SmallMotifs(4, 4);  // 8 samples
  auto cfg = SmallConfig(0);
  cfg.epochs = 2;
  cfg.batch_size = 7;  // batches of 7 and 1
  const auto res = train(ds.samples, cfg);
  EXPECT_EQ(res.steps.size(), 2u);
}

TEST(Train, EarlyStopping) {
  const auto ds = SmallMotifs(5, 4);
  auto cfg = SmallConfig(0);
  cfg.lr = 0.0;
  cfg.epochs = 400;
  cfg.early_stop = true;
  cfg.early_stop_window = 5;
  cfg.early_stop_tol = 1.0;  // anything short of halving counts as a plateau
  const auto res = train(ds.samples, cfg);
  EXPECT_TRUE(res.stopped_early);
  EXPECT_EQ(res.epochs_run, 10);
}

TEST(Train, Errors) {
  const auto ds = SmallMotifs(6, 2);
  auto cfg = SmallConfig(0);
  EXPECT_THROW(train(std::span<const Series>(ds.samples.data(), 1), cfg), ShapeError);
  cfg.batch_size = 1;
  EXPECT_THROW(train(ds.samples, cfg), ConfigError);
  cfg = SmallConfig(0);
  cfg.encoder.d_repr = 13;
  EXPECT_THROW(train(ds.samples, cfg), ConfigError);
  cfg = SmallConfig(0);
  cfg.encoder.reference_length = 200;
  EXPECT_THROW(train(ds.samples, cfg), ShapeError);
  cfg = SmallConfig(0);
  cfg.lr = 1e300;
  cfg.epochs = 5;
  try {
    train(ds.samples, cfg);
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(EncodeDataset, PureAndConsistent) {
  const auto ds = SmallMotifs(7);
  const auto res = train(ds.samples, SmallConfig(1));
  const auto bn_before = res.batchnorm.running_mean;
  const Matrix z = encode_dataset(ds.samples, res.params, res.batchnorm);
  EXPECT_EQ(res.batchnorm.running_mean, bn_before);
  EXPECT_EQ(z.rows(), static_cast<Index>(ds.size()));
  EXPECT_EQ(z.cols(), 12);
  EXPECT_EQ(encode_dataset(ds.samples, res.params, res.batchnorm), z);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Vector raw = encode(ds.samples[i], res.params);
    const Vector expected = (raw - res.batchnorm.running_mean).array() /
                            (res.batchnorm.running_var.array() + res.batchnorm.epsilon).sqrt();
    EXPECT_LT((z.row(static_cast<Index>(i)).transpose() - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
  const std::vector<Series> short_one{Series(Matrix::Zero(2, 5))};
  EXPECT_THROW(encode_dataset(short_one, res.params, res.batchnorm), ShapeError);
}

}  // namespace
}  // namespace csl
