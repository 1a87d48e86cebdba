#pragma once

// Multi-scale, multi-measure shapelet encoder.
//
// A shapelet s (D x L) turns a series x (D x T) into one number: the best
// value over all windows x[:, t:t+L] of a (dis)similarity summed over
// dimensions. Euclidean distance is minimized; cosine similarity and the
// unnormalized cross-correlation (dot product) are maximized.
//
// Embedding layout: R contiguous blocks of K = D_repr / R features, one block
// per scale (shortest first). Inside a block, features are grouped by measure
// in the configured order, then by shapelet index.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csl/augment.hpp"
#include "csl/data.hpp"
#include "csl/error.hpp"

namespace csl {

enum class Measure { euclidean, cosine, cross_correlation };

inline constexpr std::array<Measure, 3> kAllMeasures = {Measure::euclidean, Measure::cosine,
                                                        Measure::cross_correlation};

inline std::string_view to_string(Measure m) {
  switch (m) {
    case Measure::euclidean: return "euclidean";
    case Measure::cosine: return "cosine";
    case Measure::cross_correlation: return "cross_correlation";
  }
  return "?";
}

inline Measure parse_measure(std::string_view name) {
  if (name == "euclidean") return Measure::euclidean;
  if (name == "cosine") return Measure::cosine;
  if (name == "cross_correlation" || name == "cross") return Measure::cross_correlation;
  throw ConfigError("unknown measure '" + std::string(name) + "'");
}

// True when smaller values mean a better match.
inline constexpr bool minimizes(Measure m) { return m == Measure::euclidean; }

inline constexpr double kNormGuard = 1e-12;

struct EncoderConfig {
  int num_scales = 8;
  std::vector<Measure> measures{kAllMeasures.begin(), kAllMeasures.end()};
  int d_repr = 320;
  double min_length_frac = 0.1;
  double max_length_frac = 0.8;
  Index reference_length = 0;  // series length the shapelet lengths are derived from
  Index dims = 0;

  int num_measures() const { return static_cast<int>(measures.size()); }
  int block_size() const { return d_repr / num_scales; }

  // Shapelets per measure inside one scale block. When K is not a multiple of
  // M the first K % M measures receive one extra shapelet.
  std::vector<int> shapelets_per_measure() const {
    const int k = block_size();
    const int m = num_measures();
    std::vector<int> counts(static_cast<std::size_t>(m), k / m);
    for (int i = 0; i < k % m; ++i) ++counts[static_cast<std::size_t>(i)];
    return counts;
  }

  // L_r for r = 1..R, evenly spaced over [min_frac, max_frac] * T_ref.
  std::vector<Index> lengths() const {
    std::vector<Index> out;
    for (int r = 0; r < num_scales; ++r) {
      const double frac = num_scales == 1 ? min_length_frac
                                          : min_length_frac + r * (max_length_frac - min_length_frac) / (num_scales - 1);
      out.push_back(std::max<Index>(1, static_cast<Index>(std::lround(frac * static_cast<double>(reference_length)))));
    }
    return out;
  }

  Index max_length() const {
    const auto l = lengths();
    return *std::max_element(l.begin(), l.end());
  }

  void validate() const {
    if (num_scales < 1) throw ConfigError("number of scales must be >= 1");
    if (measures.empty()) throw ConfigError("at least one measure is required");
    if (d_repr < 1) throw ConfigError("embedding dimension must be >= 1");
    if (d_repr % num_scales != 0)
      throw ConfigError("embedding dimension " + std::to_string(d_repr) + " is not divisible by " +
                        std::to_string(num_scales) + " scales");
    if (block_size() < num_measures())
      throw ConfigError("each scale block needs at least one shapelet per measure");
    if (!(0.0 < min_length_frac && min_length_frac <= max_length_frac && max_length_frac <= 1.0))
      throw ConfigError("shapelet length fractions must satisfy 0 < min <= max <= 1");
    if (reference_length < 1 || dims < 1) throw ConfigError("encoder needs reference length and dimension count");
  }

  // Builds a config with exactly V shapelets for every (scale, measure).
  static EncoderConfig uniform(int scales, std::vector<Measure> ms, int per_measure, Index t_ref, Index d) {
    EncoderConfig c;
    c.num_scales = scales;
    c.measures = std::move(ms);
    c.d_repr = scales * static_cast<int>(c.measures.size()) * per_measure;
    c.reference_length = t_ref;
    c.dims = d;
    return c;
  }
};

struct FeatureSlot {
  int scale;
  Measure measure;
  int index;  // shapelet index within (scale, measure)
  Index length;
};

inline std::vector<FeatureSlot> feature_layout(const EncoderConfig& cfg) {
  std::vector<FeatureSlot> out;
  const auto lens = cfg.lengths();
  const auto counts = cfg.shapelets_per_measure();
  for (int r = 0; r < cfg.num_scales; ++r)
    for (int m = 0; m < cfg.num_measures(); ++m)
      for (int v = 0; v < counts[static_cast<std::size_t>(m)]; ++v)
        out.push_back({r, cfg.measures[static_cast<std::size_t>(m)], v, lens[static_cast<std::size_t>(r)]});
  return out;
}

// All learnable shapelets, stored in embedding order (see feature_layout).
struct ModelParams {
  EncoderConfig config;
  std::vector<Matrix> shapelets;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& s : shapelets) n += static_cast<std::size_t>(s.size());
    return n;
  }

  void check() const {
    config.validate();
    const auto layout = feature_layout(config);
    if (layout.size() != shapelets.size()) throw ShapeError("shapelet count does not match encoder config");
    for (std::size_t i = 0; i < layout.size(); ++i) {
      if (shapelets[i].rows() != config.dims || shapelets[i].cols() != layout[i].length)
        throw ShapeError("shapelet " + std::to_string(i) + " has the wrong shape");
      if (!shapelets[i].allFinite()) throw ShapeError("shapelet " + std::to_string(i) + " is not finite");
    }
  }
};

// Gradients with the same shapes as ModelParams::shapelets.
using ParamGrads = std::vector<Matrix>;

inline ParamGrads zero_grads(const ModelParams& p) {
  ParamGrads g;
  g.reserve(p.shapelets.size());
  for (const auto& s : p.shapelets) g.push_back(Matrix::Zero(s.rows(), s.cols()));
  return g;
}

struct FeatureMatch {
  double value = 0.0;
  Index start = 0;  // best window; ties resolve to the earliest
};

namespace detail {

inline void check_fit(const Series& x, const Matrix& s) {
  if (s.rows() != x.dims())
    throw ShapeError("shapelet has " + std::to_string(s.rows()) + " dimensions, series has " + std::to_string(x.dims()));
  if (s.cols() > x.length())
    throw ShapeError("shapelet length " + std::to_string(s.cols()) + " exceeds series length " +
                     std::to_string(x.length()));
}

inline double dot(const double* a, const double* b, Index n) {
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace detail

inline FeatureMatch match_shapelet(const Series& x, const Matrix& s, Measure m) {
  detail::check_fit(x, s);
  const Index d = x.dims();
  const Index len = s.cols();
  const Index windows = x.length() - len + 1;
  FeatureMatch best;

  switch (m) {
    case Measure::euclidean: {
      double best_sq = std::numeric_limits<double>::infinity();
      for (Index t = 0; t < windows; ++t) {
        double acc = 0.0;
        for (Index j = 0; j < d && acc < best_sq; ++j) {
          const double* xw = x.values.row(j).data() + t;
          const double* sj = s.row(j).data();
          for (Index l = 0; l < len; ++l) {
            const double diff = xw[l] - sj[l];
            acc += diff * diff;
          }
        }
        if (acc < best_sq) {
          best_sq = acc;
          best.start = t;
        }
      }
      best.value = std::sqrt(best_sq);
      break;
    }
    case Measure::cosine: {
      std::vector<double> s_norm(static_cast<std::size_t>(d));
      for (Index j = 0; j < d; ++j) s_norm[static_cast<std::size_t>(j)] = std::sqrt(detail::dot(s.row(j).data(), s.row(j).data(), len));
      best.value = -std::numeric_limits<double>::infinity();
      for (Index t = 0; t < windows; ++t) {
        double acc = 0.0;
        for (Index j = 0; j < d; ++j) {
          const double sn = s_norm[static_cast<std::size_t>(j)];
          if (sn < kNormGuard) continue;
          const double* xw = x.values.row(j).data() + t;
          const double* sj = s.row(j).data();
          double xs = 0.0, xx = 0.0;
          for (Index l = 0; l < len; ++l) {
            xs += xw[l] * sj[l];
            xx += xw[l] * xw[l];
          }
          const double xn = std::sqrt(xx);
          if (xn < kNormGuard) continue;
          acc += xs / (xn * sn);
        }
        if (acc > best.value) {
          best.value = acc;
          best.start = t;
        }
      }
      break;
    }
    case Measure::cross_correlation: {
      best.value = -std::numeric_limits<double>::infinity();
      for (Index t = 0; t < windows; ++t) {
        double acc = 0.0;
        for (Index j = 0; j < d; ++j) acc += detail::dot(x.values.row(j).data() + t, s.row(j).data(), len);
        if (acc > best.value) {
          best.value = acc;
          best.start = t;
        }
      }
      break;
    }
  }
  return best;
}

inline double shapelet_feature(const Series& x, const Matrix& s, Measure m) { return match_shapelet(x, s, m).value; }

// grad += upstream * d(feature)/d(s), evaluated at the matched window.
// Min/max are differentiated as the selected window's branch.
inline void add_feature_gradient(const Series& x, const Matrix& s, Measure m, const FeatureMatch& match,
                                 double upstream, Matrix& grad) {
  if (upstream == 0.0) return;
  const Index d = x.dims();
  const Index len = s.cols();
  const Index t = match.start;
  switch (m) {
    case Measure::euclidean: {
      if (match.value < kNormGuard) return;
      const double scale = upstream / match.value;
      for (Index j = 0; j < d; ++j) {
        const double* xw = x.values.row(j).data() + t;
        for (Index l = 0; l < len; ++l) grad(j, l) += scale * (s(j, l) - xw[l]);
      }
      break;
    }
    case Measure::cosine: {
      for (Index j = 0; j < d; ++j) {
        const double* xw = x.values.row(j).data() + t;
        const double* sj = s.row(j).data();
        double xs = 0.0, xx = 0.0, ss = 0.0;
        for (Index l = 0; l < len; ++l) {
          xs += xw[l] * sj[l];
          xx += xw[l] * xw[l];
          ss += sj[l] * sj[l];
        }
        const double xn = std::sqrt(xx), sn = std::sqrt(ss);
        if (xn < kNormGuard || sn < kNormGuard) continue;
        const double cos = xs / (xn * sn);
        for (Index l = 0; l < len; ++l) grad(j, l) += upstream * (xw[l] / (xn * sn) - cos * sj[l] / ss);
      }
      break;
    }
    case Measure::cross_correlation: {
      for (Index j = 0; j < d; ++j) {
        const double* xw = x.values.row(j).data() + t;
        for (Index l = 0; l < len; ++l) grad(j, l) += upstream * xw[l];
      }
      break;
    }
  }
}

// Forward pass plus the matched window of every feature, reused by backward.
struct EncodeTrace {
  Vector z;
  std::vector<FeatureMatch> matches;
};

inline EncodeTrace encode_traced(const Series& x, const ModelParams& p) {
  const auto layout = feature_layout(p.config);
  if (layout.size() != p.shapelets.size()) throw ShapeError("shapelet count does not match encoder config");
  if (x.dims() != p.config.dims)
    throw ShapeError("series has " + std::to_string(x.dims()) + " dimensions, encoder expects " +
                     std::to_string(p.config.dims));
  EncodeTrace tr;
  tr.z.resize(static_cast<Index>(layout.size()));
  tr.matches.resize(layout.size());
  for (std::size_t f = 0; f < layout.size(); ++f) {
    tr.matches[f] = match_shapelet(x, p.shapelets[f], layout[f].measure);
    tr.z(static_cast<Index>(f)) = tr.matches[f].value;
  }
  return tr;
}

inline Vector encode(const Series& x, const ModelParams& p) { return encode_traced(x, p).z; }

inline Matrix encode_batch(std::span<const Series> xs, const ModelParams& p) {
  Matrix z(static_cast<Index>(xs.size()), p.config.d_repr);
  for (std::size_t i = 0; i < xs.size(); ++i) z.row(static_cast<Index>(i)) = encode(xs[i], p).transpose();
  return z;
}

inline void accumulate_backward(const Series& x, const ModelParams& p, const EncodeTrace& tr,
                                const Eigen::Ref<const Vector>& upstream, ParamGrads& grads) {
  if (upstream.size() != static_cast<Index>(p.shapelets.size())) throw ShapeError("upstream gradient has wrong length");
  const auto layout = feature_layout(p.config);
  for (std::size_t f = 0; f < layout.size(); ++f)
    add_feature_gradient(x, p.shapelets[f], layout[f].measure, tr.matches[f], upstream(static_cast<Index>(f)), grads[f]);
}

// Gradient of upstream . encode(x) with respect to every shapelet.
inline ParamGrads encode_backward(const Series& x, const ModelParams& p, const Eigen::Ref<const Vector>& upstream) {
  ParamGrads g = zero_grads(p);
  accumulate_backward(x, p, encode_traced(x, p), upstream, g);
  return g;
}

// Entries drawn i.i.d. from N(0, 1).
inline ModelParams init_params(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams p{cfg, {}};
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& slot : feature_layout(cfg)) {
    Matrix s(cfg.dims, slot.length);
    for (Index i = 0; i < s.size(); ++i) s.data()[i] = normal(rng);
    p.shapelets.push_back(std::move(s));
  }
  return p;
}

// Each shapelet copies a random subsequence of a random training sample.
inline ModelParams init_params_from_data(const EncoderConfig& cfg, std::span<const Series> data, Rng& rng) {
  cfg.validate();
  if (data.empty()) throw ShapeError("cannot initialize shapelets from an empty dataset");
  ModelParams p{cfg, {}};
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  for (const auto& slot : feature_layout(cfg)) {
    const Series& x = data[pick(rng)];
    detail::check_fit(x, Matrix(cfg.dims, slot.length));
    const Index start = std::uniform_int_distribution<Index>(0, x.length() - slot.length)(rng);
    p.shapelets.push_back(x.values.middleCols(start, slot.length).eval());
  }
  return p;
}

}  // namespace csl
