#pragma once

// Time-series augmentation library used to build the two contrastive views.
// Every method acts on each dimension independently and keeps the (D, T)
// shape of its input.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "csl/data.hpp"
#include "csl/error.hpp"

namespace csl {

enum class AugmentMethod { jitter, crop, time_warp, quantize, pool };

inline constexpr std::array<AugmentMethod, 5> kAllAugmentMethods = {
    AugmentMethod::jitter, AugmentMethod::crop, AugmentMethod::time_warp, AugmentMethod::quantize,
    AugmentMethod::pool};

inline std::string_view to_string(AugmentMethod m) {
  switch (m) {
    case AugmentMethod::jitter: return "jitter";
    case AugmentMethod::crop: return "crop";
    case AugmentMethod::time_warp: return "time_warp";
    case AugmentMethod::quantize: return "quantize";
    case AugmentMethod::pool: return "pool";
  }
  return "?";
}

inline AugmentMethod parse_augment_method(std::string_view name) {
  for (const auto m : kAllAugmentMethods)
    if (to_string(m) == name) return m;
  if (name == "warp" || name == "timewarp") return AugmentMethod::time_warp;
  throw ConfigError("unknown augmentation '" + std::string(name) + "'");
}

struct AugmentConfig {
  double jitter_sigma = 0.03;  // fraction of the per-dimension standard deviation
  double crop_ratio_low = 0.8;
  double crop_ratio_high = 1.0;
  int warp_speed_changes = 3;
  double warp_max_ratio = 3.0;
  int quantize_levels = 10;
  int pool_size = 2;
  std::vector<AugmentMethod> enabled{kAllAugmentMethods.begin(), kAllAugmentMethods.end()};

  void validate() const {
    if (!(0.0 < crop_ratio_low && crop_ratio_low <= crop_ratio_high && crop_ratio_high <= 1.0))
      throw ConfigError("crop ratio range must satisfy 0 < low <= high <= 1");
    if (jitter_sigma < 0.0) throw ConfigError("jitter sigma must be >= 0");
    if (quantize_levels < 2) throw ConfigError("quantize levels must be >= 2");
    if (pool_size < 1) throw ConfigError("pool size must be >= 1");
    if (warp_speed_changes < 1 || warp_max_ratio <= 0.0) throw ConfigError("time-warp parameters must be positive");
    if (enabled.empty()) throw ConfigError("no augmentation method enabled");
  }

  void disable(AugmentMethod m) { enabled.erase(std::remove(enabled.begin(), enabled.end(), m), enabled.end()); }
};

namespace detail {

// Linear interpolation of `row` at fractional position `pos` in [0, n-1].
inline double lerp_at(const double* row, Index n, double pos) {
  pos = std::clamp(pos, 0.0, static_cast<double>(n - 1));
  const auto lo = static_cast<Index>(std::floor(pos));
  const Index hi = std::min(lo + 1, n - 1);
  const double frac = pos - static_cast<double>(lo);
  return row[lo] + frac * (row[hi] - row[lo]);
}

}  // namespace detail

// x + N(0, (sigma * sd_dim)^2) per observation. A constant dimension uses
// sd_dim = 1 so noise is still injected on flat channels.
inline Series jitter(const Series& x, double sigma, Rng& rng) {
  Series out = x;
  if (sigma == 0.0) return out;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index j = 0; j < x.dims(); ++j) {
    const auto row = x.values.row(j);
    const double mean = row.mean();
    double sd = std::sqrt((row.array() - mean).square().mean());
    if (sd < 1e-8) sd = 1.0;
    for (Index t = 0; t < x.length(); ++t) out.values(j, t) += sigma * sd * normal(rng);
  }
  return out;
}

// Picks a random contiguous window covering ratio*T steps and stretches it
// back to T steps with linear interpolation.
inline Series crop(const Series& x, double ratio_low, double ratio_high, Rng& rng) {
  const Index n = x.length();
  const double ratio = (ratio_low == ratio_high) ? ratio_low : std::uniform_real_distribution<double>(ratio_low, ratio_high)(rng);
  const Index len = std::clamp<Index>(static_cast<Index>(std::lround(ratio * static_cast<double>(n))), 2, n);
  const Index start = std::uniform_int_distribution<Index>(0, n - len)(rng);
  Series out = x;
  if (len == n) return out;
  const double scale = static_cast<double>(len - 1) / static_cast<double>(n - 1);
  for (Index j = 0; j < x.dims(); ++j) {
    const double* src = x.values.row(j).data() + start;
    for (Index t = 0; t < n; ++t) out.values(j, t) = detail::lerp_at(src, len, static_cast<double>(t) * scale);
  }
  return out;
}

// Random monotone piecewise-linear remap of the time axis: the output axis is
// cut into n_changes+1 equal segments, each traversing the input at a speed
// drawn from [1, max_ratio], then rescaled so both endpoints stay pinned.
inline Series time_warp(const Series& x, int n_changes, double max_ratio, Rng& rng) {
  const Index n = x.length();
  const int segments = n_changes + 1;
  std::vector<double> speed(static_cast<std::size_t>(segments), 1.0);
  if (max_ratio > 1.0) {
    std::uniform_real_distribution<double> u(1.0, max_ratio);
    for (auto& v : speed) v = u(rng);
  }
  // cumulative input position at each segment boundary
  std::vector<double> knot(static_cast<std::size_t>(segments) + 1, 0.0);
  for (int k = 0; k < segments; ++k) knot[static_cast<std::size_t>(k) + 1] = knot[static_cast<std::size_t>(k)] + speed[static_cast<std::size_t>(k)];
  const double total = knot.back();
  const double last = static_cast<double>(n - 1);

  std::vector<double> pos(static_cast<std::size_t>(n));
  for (Index t = 0; t < n; ++t) {
    const double u = static_cast<double>(t) / last * segments;  // position in segment units
    const int k = std::min(static_cast<int>(u), segments - 1);
    const double frac = u - k;
    const double in = knot[static_cast<std::size_t>(k)] + frac * speed[static_cast<std::size_t>(k)];
    pos[static_cast<std::size_t>(t)] = in / total * last;
  }
  pos.front() = 0.0;
  pos.back() = last;

  Series out = x;
  for (Index j = 0; j < x.dims(); ++j) {
    const double* src = x.values.row(j).data();
    for (Index t = 0; t < n; ++t) out.values(j, t) = detail::lerp_at(src, n, pos[static_cast<std::size_t>(t)]);
  }
  return out;
}

// Snaps each observation to the nearest of n_levels evenly spaced values
// spanning that dimension's [min, max].
inline Series quantize(const Series& x, int n_levels) {
  if (n_levels < 2) throw ConfigError("quantize needs at least 2 levels");
  Series out = x;
  for (Index j = 0; j < x.dims(); ++j) {
    const double lo = x.values.row(j).minCoeff();
    const double hi = x.values.row(j).maxCoeff();
    if (hi <= lo) continue;
    const double step = (hi - lo) / (n_levels - 1);
    for (Index t = 0; t < x.length(); ++t) {
      const double k = std::clamp(std::round((x.values(j, t) - lo) / step), 0.0, static_cast<double>(n_levels - 1));
      out.values(j, t) = (k == n_levels - 1) ? hi : lo + k * step;
    }
  }
  return out;
}

// Replaces each block of `size` consecutive observations (the last block may
// be shorter) by the block mean.
inline Series pool(const Series& x, int size) {
  if (size < 1) throw ConfigError("pool size must be >= 1");
  Series out = x;
  if (size == 1) return out;
  for (Index j = 0; j < x.dims(); ++j)
    for (Index b = 0; b < x.length(); b += size) {
      const Index len = std::min<Index>(size, x.length() - b);
      out.values.row(j).segment(b, len).setConstant(x.values.row(j).segment(b, len).mean());
    }
  return out;
}

inline Series apply_augmentation(const Series& x, AugmentMethod m, const AugmentConfig& cfg, Rng& rng) {
  switch (m) {
    case AugmentMethod::jitter: return jitter(x, cfg.jitter_sigma, rng);
    case AugmentMethod::crop: return crop(x, cfg.crop_ratio_low, cfg.crop_ratio_high, rng);
    case AugmentMethod::time_warp: return time_warp(x, cfg.warp_speed_changes, cfg.warp_max_ratio, rng);
    case AugmentMethod::quantize: return quantize(x, cfg.quantize_levels);
    case AugmentMethod::pool: return pool(x, cfg.pool_size);
  }
  return x;
}

inline AugmentMethod draw_method(const AugmentConfig& cfg, Rng& rng) {
  if (cfg.enabled.empty()) throw ConfigError("no augmentation method enabled");
  std::uniform_int_distribution<std::size_t> pick(0, cfg.enabled.size() - 1);
  return cfg.enabled[pick(rng)];
}

// Two independently drawn methods (possibly the same one) applied to x.
inline std::pair<Series, Series> sample_pair(const Series& x, const AugmentConfig& cfg, Rng& rng) {
  const AugmentMethod a = draw_method(cfg, rng);
  const AugmentMethod b = draw_method(cfg, rng);
  Series first = apply_augmentation(x, a, cfg, rng);
  Series second = apply_augmentation(x, b, cfg, rng);
  return {std::move(first), std::move(second)};
}

}  // namespace csl
