#include <gtest/gtest.h>

#include <numeric>

#include "csl/encoder.hpp"

namespace csl {
namespace {

Matrix RandomMatrix(Rng& rng, Index rows, Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

Series RowSeries(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Index>(v.size()));
  Index i = 0;
  for (const double x : v) m(0, i++) = x;
  return Series(std::move(m));
}

// Materializes every window and scores it independently of the library code.
FeatureMatch BruteForce(const Series& x, const Matrix& s, Measure m) {
  const Index len = s.cols();
  FeatureMatch best{minimizes(m) ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity(), 0};
  for (Index t = 0; t + len <= x.length(); ++t) {
    const Matrix window = x.values.middleCols(t, len);
    double score = 0.0;
    if (m == Measure::euclidean) {
      score = (window - s).norm();
    } else {
      for (Index j = 0; j < s.rows(); ++j) {
        const double dotp = window.row(j).dot(s.row(j));
        if (m == Measure::cross_correlation) {
          score += dotp;
        } else if (window.row(j).norm() >= 1e-12 && s.row(j).norm() >= 1e-12) {
          score += dotp / (window.row(j).norm() * s.row(j).norm());
        }
      }
    }
    if (minimizes(m) ? score < best.value : score > best.value) best = {score, t};
  }
  return best;
}

TEST(ShapeletFeature, ExactMatchWindowIsZero) {
  Matrix s(1, 2);
  s << 2, 3;
  const auto m = match_shapelet(RowSeries({1, 2, 3, 4}), s, Measure::euclidean);
  EXPECT_EQ(m.value, 0.0);
  EXPECT_EQ(m.start, 1);
}

TEST(ShapeletFeature, ZeroShapeletAnnihilatesCrossCorrelation) {
  EXPECT_EQ(shapelet_feature(RowSeries({1, 2, 3, 4}), Matrix::Zero(1, 2), Measure::cross_correlation), 0.0);
}

TEST(ShapeletFeature, ZeroShapeletCosineIsGuarded) {
  const auto x = RowSeries({1, 2, 3, 4});
  EXPECT_EQ(shapelet_feature(x, Matrix::Zero(1, 2), Measure::cosine), 0.0);
  Matrix g = Matrix::Zero(1, 2);
  add_feature_gradient(x, Matrix::Zero(1, 2), Measure::cosine, match_shapelet(x, Matrix::Zero(1, 2), Measure::cosine), 1.0,
                       g);
  EXPECT_EQ(g, Matrix::Zero(1, 2));
}

TEST(ShapeletFeature, MatchesBruteForceOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index d = 1 + trial % 3;
    const Index t = 2 + static_cast<Index>(rng() % 19);
    const Index len = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(std::min<Index>(t, 8)));
    const Series x(RandomMatrix(rng, d, t));
    const Matrix s = RandomMatrix(rng, d, len);
    for (const auto m : kAllMeasures) {
      const auto got = match_shapelet(x, s, m);
      const auto want = BruteForce(x, s, m);
      ASSERT_NEAR(got.value, want.value, 1e-10) << to_string(m);
      EXPECT_EQ(got.start, want.start) << to_string(m);
    }
  }
}

TEST(ShapeletFeature, TiesResolveToEarliestWindow) {
  const auto x = RowSeries({1, 0, 1, 0, 1});
  Matrix s(1, 1);
  s << 1;
  for (const auto m : kAllMeasures) EXPECT_EQ(match_shapelet(x, s, m).start, 0) << to_string(m);
}

TEST(ShapeletFeature, EuclideanZeroExactlyWhenPlanted) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    Series x(RandomMatrix(rng, 2, 20));
    const Matrix s = RandomMatrix(rng, 2, 5);
    EXPECT_GT(shapelet_feature(x, s, Measure::euclidean), 0.0);
    const Index at = static_cast<Index>(rng() % 16);
    x.values.middleCols(at, 5) = s;
    EXPECT_EQ(shapelet_feature(x, s, Measure::euclidean), 0.0);
  }
}

TEST(ShapeletFeature, EuclideanShiftInvariance) {
  Rng rng(3);
  const Matrix s = RandomMatrix(rng, 2, 4);
  const Matrix pattern = s.array() + 0.25;
  double first = -1.0;
  for (Index at = 0; at <= 16; ++at) {
    Series x(Matrix::Constant(2, 20, 50.0));
    x.values.middleCols(at, 4) = pattern;
    const double v = shapelet_feature(x, s, Measure::euclidean);
    if (first < 0) first = v;
    EXPECT_NEAR(v, first, 1e-12);
  }
}

TEST(ShapeletFeature, CrossCorrelationIsMaxOfSummedCorrelationSequences) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Series x(RandomMatrix(rng, 3, 17));
    const Matrix s = RandomMatrix(rng, 3, 6);
    // full 1-D correlation per dimension, summed, restricted to valid lags
    std::vector<double> seq(12, 0.0);
    for (Index j = 0; j < 3; ++j)
      for (Index lag = 0; lag < 12; ++lag)
        for (Index l = 0; l < 6; ++l) seq[static_cast<std::size_t>(lag)] += x.values(j, lag + l) * s(j, l);
    EXPECT_NEAR(shapelet_feature(x, s, Measure::cross_correlation), *std::max_element(seq.begin(), seq.end()), 1e-10);
  }
}

TEST(ShapeletFeature, Errors) {
  EXPECT_THROW(shapelet_feature(RowSeries({1, 2}), Matrix::Zero(1, 3), Measure::euclidean), ShapeError);
  EXPECT_THROW(shapelet_feature(RowSeries({1, 2, 3}), Matrix::Zero(2, 2), Measure::cosine), ShapeError);
}

TEST(EncoderConfig, DefaultLayout) {
  EncoderConfig cfg;
  cfg.reference_length = 100;
  cfg.dims = 6;
  cfg.validate();
  EXPECT_EQ(cfg.block_size(), 40);
  EXPECT_EQ(cfg.shapelets_per_measure(), (std::vector<int>{14, 13, 13}));
  EXPECT_EQ(cfg.lengths(), (std::vector<Index>{10, 20, 30, 40, 50, 60, 70, 80}));
  EXPECT_EQ(feature_layout(cfg).size(), 320u);
}

TEST(EncoderConfig, LengthFormula) {
  EncoderConfig cfg;
  cfg.reference_length = 37;
  cfg.num_scales = 4;
  cfg.d_repr = 12;
  for (int r = 0; r < 4; ++r) {
    const double frac = 0.1 + r * (0.8 - 0.1) / 3.0;
    EXPECT_EQ(cfg.lengths()[static_cast<std::size_t>(r)], std::lround(37 * frac));
  }
  cfg.num_scales = 1;
  EXPECT_EQ(cfg.lengths(), (std::vector<Index>{4}));
}

TEST(EncoderConfig, Validation) {
  auto cfg = EncoderConfig::uniform(2, {kAllMeasures.begin(), kAllMeasures.end()}, 4, 20, 1);
  cfg.validate();
  cfg.d_repr = 25;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.d_repr = 4;  // K = 2 < M = 3
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.d_repr = 24;
  cfg.max_length_frac = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.max_length_frac = 0.8;
  cfg.measures.clear();
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(parse_measure("cross"), Measure::cross_correlation);
  EXPECT_THROW(parse_measure("dtw"), ConfigError);
}

TEST(Encode, SingleShapeletIsTheFeature) {
  Rng rng(5);
  const auto cfg = EncoderConfig::uniform(1, {Measure::cosine}, 1, 10, 2);
  const auto p = init_params(cfg, rng);
  const Series x(RandomMatrix(rng, 2, 10));
  const Vector z = encode(x, p);
  ASSERT_EQ(z.size(), 1);
  EXPECT_EQ(z(0), shapelet_feature(x, p.shapelets[0], Measure::cosine));
}

TEST(Encode, BlockLayout) {
  Rng rng(6);
  const auto cfg = EncoderConfig::uniform(2, {kAllMeasures.begin(), kAllMeasures.end()}, 4, 20, 1);
  EXPECT_EQ(cfg.d_repr, 24);
  const auto layout = feature_layout(cfg);
  for (std::size_t f = 0; f < 24; ++f) {
    EXPECT_EQ(layout[f].scale, f < 12 ? 0 : 1);
    EXPECT_EQ(layout[f].measure, kAllMeasures[(f % 12) / 4]);
    EXPECT_EQ(layout[f].index, static_cast<int>(f % 4));
  }
  const auto p = init_params(cfg, rng);
  p.check();
  const Series x(RandomMatrix(rng, 1, 20));
  const Vector z = encode(x, p);
  for (std::size_t f = 0; f < 24; ++f)
    EXPECT_EQ(z(static_cast<Index>(f)), shapelet_feature(x, p.shapelets[f], layout[f].measure));
}

TEST(Encode, BlockEqualsSingleScaleEncoder) {
  Rng rng(7);
  const std::vector<Measure> all{kAllMeasures.begin(), kAllMeasures.end()};
  const auto cfg = EncoderConfig::uniform(3, all, 2, 30, 2);
  const auto p = init_params(cfg, rng);
  const Series x(RandomMatrix(rng, 2, 30));
  const Vector z = encode(x, p);
  const Index k = cfg.block_size();
  for (int r = 0; r < 3; ++r) {
    auto single = EncoderConfig::uniform(1, all, 2, 30, 2);
    single.min_length_frac = single.max_length_frac =
        static_cast<double>(cfg.lengths()[static_cast<std::size_t>(r)]) / 30.0;
    ModelParams q{single, {p.shapelets.begin() + r * k, p.shapelets.begin() + (r + 1) * k}};
    q.check();
    EXPECT_EQ(encode(x, q), z.segment(r * k, k));
  }
}

TEST(Encode, BatchPermutationPermutesRows) {
  Rng rng(8);
  const auto cfg = EncoderConfig::uniform(2, {kAllMeasures.begin(), kAllMeasures.end()}, 1, 12, 2);
  const auto p = init_params(cfg, rng);
  std::vector<Series> xs;
  for (int i = 0; i < 5; ++i) xs.emplace_back(RandomMatrix(rng, 2, 12));
  const Matrix z = encode_batch(xs, p);
  std::vector<Series> perm{xs[3], xs[0], xs[4], xs[2], xs[1]};
  const Matrix zp = encode_batch(perm, p);
  const int order[] = {3, 0, 4, 2, 1};
  for (int i = 0; i < 5; ++i) EXPECT_EQ(zp.row(i), z.row(order[i]));
  for (int i = 0; i < 5; ++i) EXPECT_EQ(z.row(i).transpose(), encode(xs[static_cast<std::size_t>(i)], p));
}

TEST(Encode, Errors) {
  Rng rng(9);
  const auto cfg = EncoderConfig::uniform(1, {Measure::euclidean}, 1, 10, 2);
  const auto p = init_params(cfg, rng);
  EXPECT_THROW(encode(Series(RandomMatrix(rng, 3, 10)), p), ShapeError);
  EXPECT_THROW(encode(Series(RandomMatrix(rng, 2, 0)), p), ShapeError);
  ModelParams broken = p;
  broken.shapelets.pop_back();
  EXPECT_THROW(broken.check(), ShapeError);
}

TEST(EncodeBackward, MatchesFiniteDifferences) {
  Rng rng(10);
  const double h = 1e-4;
  int checked_instances = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const Index d = 1 + trial % 3;
    const Index t = 10 + trial % 11;
    auto cfg = EncoderConfig::uniform(2, {kAllMeasures.begin(), kAllMeasures.end()}, 2, t, d);
    cfg.max_length_frac = 0.4;
    ASSERT_LE(cfg.max_length(), 8);
    auto p = init_params(cfg, rng);
    const Series x(RandomMatrix(rng, d, t));
    const Vector upstream = RandomMatrix(rng, cfg.d_repr, 1);
    const auto analytic = encode_backward(x, p, upstream);
    const auto base = encode_traced(x, p);
    double diff = 0.0, scale = 0.0;
    for (std::size_t f = 0; f < p.shapelets.size(); ++f)
      for (Index i = 0; i < p.shapelets[f].size(); ++i) {
        double& v = p.shapelets[f].data()[i];
        const double keep = v;
        v = keep + h;
        const auto plus = encode_traced(x, p);
        const double fp = upstream.dot(plus.z);
        v = keep - h;
        const auto minus = encode_traced(x, p);
        const double fm = upstream.dot(minus.z);
        v = keep;
        if (plus.matches[f].start != base.matches[f].start || minus.matches[f].start != base.matches[f].start) continue;
        const double numeric = (fp - fm) / (2 * h);
        const double a = analytic[f].data()[i];
        diff = std::max(diff, std::abs(a - numeric));
        scale = std::max({scale, std::abs(a), std::abs(numeric)});
      }
    ASSERT_GT(scale, 0.0);
    EXPECT_LT(diff / scale, 1e-4);
    ++checked_instances;
  }
  EXPECT_EQ(checked_instances, 40);
}

TEST(EncodeBackward, ZeroUpstreamGivesZeroGradient) {
  Rng rng(11);
  const auto cfg = EncoderConfig::uniform(2, {kAllMeasures.begin(), kAllMeasures.end()}, 2, 16, 2);
  const auto p = init_params(cfg, rng);
  const auto g = encode_backward(Series(RandomMatrix(rng, 2, 16)), p, Vector::Zero(cfg.d_repr));
  for (const auto& m : g) EXPECT_EQ(m, Matrix::Zero(m.rows(), m.cols()));
}

TEST(EncodeBackward, CrossCorrelationGradientIsMatchedWindow) {
  Rng rng(12);
  const Series x(RandomMatrix(rng, 2, 15));
  const Matrix s = RandomMatrix(rng, 2, 4);
  const auto m = match_shapelet(x, s, Measure::cross_correlation);
  Matrix g = Matrix::Zero(2, 4);
  add_feature_gradient(x, s, Measure::cross_correlation, m, 1.0, g);
  EXPECT_EQ(g, x.values.middleCols(m.start, 4));
}

TEST(EncodeBackward, EuclideanGradientAtExactMatchIsGuarded) {
  const auto x = RowSeries({1, 2, 3, 4});
  Matrix s(1, 2);
  s << 2, 3;
  Matrix g = Matrix::Zero(1, 2);
  add_feature_gradient(x, s, Measure::euclidean, match_shapelet(x, s, Measure::euclidean), 1.0, g);
  EXPECT_EQ(g, Matrix::Zero(1, 2));
}

TEST(InitParams, ShapesAndDataInit) {
  Rng rng(13);
  auto cfg = EncoderConfig::uniform(3, {kAllMeasures.begin(), kAllMeasures.end()}, 2, 20, 2);
  const auto p = init_params(cfg, rng);
  p.check();
  EXPECT_EQ(p.shapelets.size(), 18u);
  std::vector<Series> data;
  for (int i = 0; i < 4; ++i) data.emplace_back(RandomMatrix(rng, 2, 20));
  const auto q = init_params_from_data(cfg, data, rng);
  q.check();
  for (const auto& s : q.shapelets) {
    bool found = false;
    for (const auto& x : data) found = found || shapelet_feature(x, s, Measure::euclidean) == 0.0;
    EXPECT_TRUE(found);
  }
}

}  // namespace
}  // namespace csl
