#pragma once

// Synthetic data used by the tests, the acceptance suite and the CLI demo
// commands.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "csl/data.hpp"

namespace csl::synthetic {

struct MotifOptions {
  int per_class = 20;
  Index dims = 2;
  Index length = 100;
  Index motif_length = 20;
  double amplitude = 1.0;
  double noise = 0.38;  // standard deviation of the white background
  Index jitter = 3;     // max offset of a motif from the center; negative: anywhere
};

// Two classes on a Gaussian white-noise background: class 0 carries one sine
// period, class 1 a square wave of the same period, each dimension at its own
// random position within `jitter` of the center. Samples alternate between
// classes.
inline Dataset planted_motifs(const MotifOptions& opt, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, opt.noise);
  const Index center = (opt.length - opt.motif_length) / 2;
  const Index lo = opt.jitter < 0 ? 0 : std::max<Index>(0, center - opt.jitter);
  const Index hi = opt.jitter < 0 ? opt.length - opt.motif_length : std::min(opt.length - opt.motif_length, center + opt.jitter);
  std::uniform_int_distribution<Index> where(lo, hi);
  Dataset ds;
  ds.class_names = {"sine", "square"};
  std::vector<int> labels;
  for (int i = 0; i < 2 * opt.per_class; ++i) {
    const int cls = i % 2;
    Matrix m(opt.dims, opt.length);
    for (Index k = 0; k < m.size(); ++k) m.data()[k] = noise(rng);
    for (Index j = 0; j < opt.dims; ++j) {
      const Index at = where(rng);
      for (Index l = 0; l < opt.motif_length; ++l) {
        const double phase = 2.0 * std::numbers::pi * static_cast<double>(l) / static_cast<double>(opt.motif_length);
        const double sine = std::sin(phase);
        const double shape = cls == 0 ? sine : (l < opt.motif_length / 2 ? 1.0 : -1.0);
        m(j, at + l) += opt.amplitude * shape;
      }
    }
    ds.samples.emplace_back(std::move(m));
    labels.push_back(cls);
  }
  ds.labels = std::move(labels);
  return ds;
}

struct StreamOptions {
  Index length = 2500;
  Index dims = 2;
  double noise = 0.1;
  double contamination = 0.02;  // fraction of flagged timestamps
  double spike_height = 4.0;
  double shift_height = 2.0;
  Index shift_length = 20;
};

// Mixture of sinusoids per dimension with injected anomalies: about half the
// flagged budget goes to single-point spikes, the rest to level-shift
// segments. Anomalies are kept apart so each one is an isolated event.
inline LabeledStream anomaly_stream(const StreamOptions& opt, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, opt.noise);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix m(opt.dims, opt.length);
  for (Index j = 0; j < opt.dims; ++j) {
    const double p1 = 40.0 + 20.0 * unif(rng), p2 = 9.0 + 4.0 * unif(rng);
    const double ph1 = 2.0 * std::numbers::pi * unif(rng), ph2 = 2.0 * std::numbers::pi * unif(rng);
    for (Index t = 0; t < opt.length; ++t)
      m(j, t) = std::sin(2.0 * std::numbers::pi * t / p1 + ph1) + 0.5 * std::sin(2.0 * std::numbers::pi * t / p2 + ph2) +
                noise(rng);
  }
  Flags flags(static_cast<std::size_t>(opt.length), 0);

  const auto budget = static_cast<Index>(std::lround(opt.contamination * static_cast<double>(opt.length)));
  const Index shift_points = budget / 2;
  const Index shifts = std::max<Index>(1, shift_points / opt.shift_length);
  const Index spikes = std::max<Index>(1, budget - shifts * opt.shift_length);
  const Index events = shifts + spikes;
  // evenly spread slots with jitter, skipping the first and last 5% of the stream
  const Index margin = opt.length / 20;
  const double slot = static_cast<double>(opt.length - 2 * margin) / static_cast<double>(events);
  std::vector<Index> kinds(static_cast<std::size_t>(events), 0);
  for (Index e = 0; e < shifts; ++e) kinds[static_cast<std::size_t>(e)] = 1;
  std::shuffle(kinds.begin(), kinds.end(), rng);
  for (Index e = 0; e < events; ++e) {
    const bool is_shift = kinds[static_cast<std::size_t>(e)] == 1;
    const Index span = is_shift ? opt.shift_length : 1;
    const double room = std::max(0.0, slot - static_cast<double>(span)) * 0.5;
    const Index at = margin + static_cast<Index>(e * slot + room * unif(rng));
    const Index dim = std::uniform_int_distribution<Index>(0, opt.dims - 1)(rng);
    const double sign = unif(rng) < 0.5 ? -1.0 : 1.0;
    for (Index t = at; t < std::min(at + span, opt.length); ++t) {
      m(dim, t) += sign * (is_shift ? opt.shift_height : opt.spike_height);
      flags[static_cast<std::size_t>(t)] = 1;
    }
  }
  return {Series(std::move(m)), std::move(flags)};
}

// Gaussian blobs in `dims` dimensions with centers spaced `separation` apart
// along the first axis.
inline Matrix blobs(int per_blob, int n_blobs, Index dims, double separation, double spread, std::uint64_t seed,
                    std::vector<int>* labels = nullptr) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, spread);
  Matrix x(static_cast<Index>(per_blob) * n_blobs, dims);
  for (int b = 0; b < n_blobs; ++b)
    for (int i = 0; i < per_blob; ++i) {
      const Index r = static_cast<Index>(b) * per_blob + i;
      for (Index j = 0; j < dims; ++j) x(r, j) = normal(rng) + (j == 0 ? b * separation : 0.0);
      if (labels) labels->push_back(b);
    }
  return x;
}

}  // namespace csl::synthetic
