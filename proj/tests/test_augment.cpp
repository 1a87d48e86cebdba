#include <gtest/gtest.h>

#include <map>
#include <set>

#include "csl/augment.hpp"

namespace csl {
namespace {

Series RandomSeries(Rng& rng, Index d, Index t) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(d, t);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return Series(std::move(m));
}

Series Row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Index>(v.size()));
  Index i = 0;
  for (const double x : v) m(0, i++) = x;
  return Series(std::move(m));
}

void ExpectWithinRowRange(const Series& in, const Series& out) {
  for (Index j = 0; j < in.dims(); ++j) {
    EXPECT_GE(out.values.row(j).minCoeff(), in.values.row(j).minCoeff() - 1e-12);
    EXPECT_LE(out.values.row(j).maxCoeff(), in.values.row(j).maxCoeff() + 1e-12);
  }
}

TEST(Jitter, ZeroSigmaIsIdentity) {
  Rng rng(1);
  const auto x = RandomSeries(rng, 3, 20);
  EXPECT_EQ(jitter(x, 0.0, rng).values, x.values);
}

TEST(Jitter, NoiseScalesWithDimensionDeviation) {
  Rng rng(2);
  Series x = RandomSeries(rng, 2, 10000);
  x.values.row(1) *= 5.0;
  const auto out = jitter(x, 0.03, rng);
  for (Index j = 0; j < 2; ++j) {
    const auto row = x.values.row(j);
    const double sd_dim = std::sqrt((row.array() - row.mean()).square().mean());
    const Eigen::RowVectorXd diff = out.values.row(j) - row;
    const double sd = std::sqrt((diff.array() - diff.mean()).square().mean());
    EXPECT_NEAR(sd, 0.03 * sd_dim, 0.1 * 0.03 * sd_dim);
  }
}

TEST(Jitter, ConstantInputGetsCenteredNoise) {
  Rng rng(3);
  const Series x(Matrix::Zero(4, 500));
  const auto out = jitter(x, 1.0, rng);
  EXPECT_LT(std::abs(out.values.mean()), 3.0 / std::sqrt(4.0 * 500.0));
  EXPECT_GT(out.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Crop, UnitRatioIsIdentity) {
  Rng rng(4);
  const auto x = RandomSeries(rng, 2, 30);
  EXPECT_EQ(crop(x, 1.0, 1.0, rng).values, x.values);
}

TEST(Crop, RampStaysMonotoneAndInRange) {
  Rng rng(5);
  Matrix m(1, 50);
  for (Index t = 0; t < 50; ++t) m(0, t) = static_cast<double>(t);
  const Series x(m);
  for (int trial = 0; trial < 100; ++trial) {
    const auto out = crop(x, 0.3, 0.9, rng);
    ASSERT_EQ(out.length(), 50);
    for (Index t = 1; t < 50; ++t) EXPECT_GE(out.values(0, t), out.values(0, t - 1));
    ExpectWithinRowRange(x, out);
  }
}

TEST(TimeWarp, UnitRatioIsIdentity) {
  Rng rng(6);
  const auto x = RandomSeries(rng, 2, 40);
  const auto out = time_warp(x, 3, 1.0, rng);
  EXPECT_LT((out.values - x.values).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(TimeWarp, EndpointsPinnedAndRangePreserved) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = RandomSeries(rng, 3, 25);
    const auto out = time_warp(x, 3, 3.0, rng);
    EXPECT_LT((out.values.col(0) - x.values.col(0)).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((out.values.col(24) - x.values.col(24)).cwiseAbs().maxCoeff(), 1e-9);
    ExpectWithinRowRange(x, out);
  }
}

TEST(TimeWarp, ActuallyWarps) {
  Rng rng(8);
  const auto x = RandomSeries(rng, 1, 60);
  EXPECT_GT((time_warp(x, 3, 3.0, rng).values - x.values).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Quantize, NearestLevel) {
  EXPECT_EQ(quantize(Row({0.0, 0.4, 1.0}), 2).values, Row({0.0, 0.0, 1.0}).values);
}

TEST(Quantize, GridValuesAreFixed) {
  const auto x = Row({0.0, 0.25, 1.0, 0.5, 0.75, 0.25});
  EXPECT_EQ(quantize(x, 5).values, x.values);
}

TEST(Quantize, AtMostLevelsDistinctValues) {
  Rng rng(9);
  const auto x = RandomSeries(rng, 3, 200);
  const auto out = quantize(x, 7);
  for (Index j = 0; j < 3; ++j) {
    std::set<double> distinct(out.values.row(j).data(), out.values.row(j).data() + 200);
    EXPECT_LE(distinct.size(), 7u);
  }
  EXPECT_THROW(quantize(x, 1), ConfigError);
}

TEST(Pool, UnitSizeIsIdentity) {
  Rng rng(10);
  const auto x = RandomSeries(rng, 2, 9);
  EXPECT_EQ(pool(x, 1).values, x.values);
}

TEST(Pool, BlockMeans) {
  EXPECT_EQ(pool(Row({1, 3, 5, 7}), 2).values, Row({2, 2, 6, 6}).values);
  EXPECT_EQ(pool(Row({1, 3, 5, 7, 9}), 2).values, Row({2, 2, 6, 6, 9}).values);
}

TEST(Pool, MeanPreservedWhenSizeDivides) {
  Rng rng(11);
  const auto x = RandomSeries(rng, 3, 12);
  const auto out = pool(x, 3);
  for (Index j = 0; j < 3; ++j) EXPECT_NEAR(out.values.row(j).mean(), x.values.row(j).mean(), 1e-12);
}

TEST(Augment, EveryMethodPreservesShape) {
  Rng rng(12);
  AugmentConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = RandomSeries(rng, 1 + trial % 3, 10 + trial);
    for (const auto m : kAllAugmentMethods) {
      const auto out = apply_augmentation(x, m, cfg, rng);
      EXPECT_EQ(out.dims(), x.dims());
      EXPECT_EQ(out.length(), x.length());
      EXPECT_TRUE(out.values.allFinite());
    }
  }
}

TEST(Augment, DeterministicUnderSeed) {
  Rng data_rng(13);
  const auto x = RandomSeries(data_rng, 2, 30);
  AugmentConfig cfg;
  for (const auto m : kAllAugmentMethods) {
    Rng a(99), b(99);
    EXPECT_EQ(apply_augmentation(x, m, cfg, a).values, apply_augmentation(x, m, cfg, b).values) << to_string(m);
  }
  Rng a(5), b(5);
  const auto p = sample_pair(x, cfg, a);
  const auto q = sample_pair(x, cfg, b);
  EXPECT_EQ(p.first.values, q.first.values);
  EXPECT_EQ(p.second.values, q.second.values);
}

TEST(SamplePair, ZeroJitterOnlyGivesCopies) {
  Rng rng(14);
  const auto x = RandomSeries(rng, 2, 15);
  AugmentConfig cfg;
  cfg.enabled = {AugmentMethod::jitter};
  cfg.jitter_sigma = 0.0;
  const auto [a, b] = sample_pair(x, cfg, rng);
  EXPECT_EQ(a.values, x.values);
  EXPECT_EQ(b.values, x.values);
}

TEST(SamplePair, UniformMethodChoice) {
  Rng rng(15);
  AugmentConfig cfg;
  std::map<AugmentMethod, int> count;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++count[draw_method(cfg, rng)];
  ASSERT_EQ(count.size(), 5u);
  for (const auto& [m, c] : count) EXPECT_NEAR(static_cast<double>(c) / draws, 0.2, 0.05) << to_string(m);
}

TEST(SamplePair, DisabledMethodNeverDrawn) {
  Rng rng(16);
  AugmentConfig cfg;
  cfg.disable(AugmentMethod::time_warp);
  for (int i = 0; i < 10000; ++i) ASSERT_NE(draw_method(cfg, rng), AugmentMethod::time_warp);
  cfg.enabled.clear();
  EXPECT_THROW(draw_method(cfg, rng), ConfigError);
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(AugmentConfig, Validation) {
  AugmentConfig cfg;
  cfg.validate();
  cfg.crop_ratio_low = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.crop_ratio_low = 0.9;
  cfg.crop_ratio_high = 0.8;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.quantize_levels = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.pool_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(parse_augment_method("warp"), AugmentMethod::time_warp);
  EXPECT_THROW(parse_augment_method("mixup"), ConfigError);
}

}  // namespace
}  // namespace csl
