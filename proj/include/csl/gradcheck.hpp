#pragma once

// Central finite-difference checks of the analytic shapelet gradients, for
// the encoder alone and for every loss term composed with batchnorm and the
// encoder. The error of one instance is
//
//   max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|)
//
// Coordinates whose +-h perturbation moves the objective onto a different
// differentiable piece (another best-matching window, or a covariance entry
// changing sign under |.|) are excluded and counted, since a finite
// difference across a kink does not estimate the derivative.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "csl/augment.hpp"
#include "csl/data.hpp"
#include "csl/encoder.hpp"
#include "csl/objective.hpp"
#include "csl/train.hpp"

namespace csl {

struct GradCheckOptions {
  int instances = 20;
  double step = 1e-4;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  int max_dims = 3;
  Index min_length = 12;
  Index max_length = 24;
  int max_scales = 3;
  int max_per_measure = 2;
  int batch = 4;
  // Component whose analytic gradient is negated (fault injection for tests).
  std::string inject_fault;
};

struct GradCheckComponent {
  std::string name;
  int instances = 0;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckComponent> components;
  bool passed() const {
    return std::all_of(components.begin(), components.end(), [](const auto& c) { return c.passed; });
  }
};

namespace detail {

struct GradInstance {
  ModelParams params;
  std::vector<Series> view1, view2;
  BatchNormState bn;
  AccumulatorSet accs;
};

inline GradInstance make_grad_instance(const GradCheckOptions& opt, Rng& rng) {
  const int d = std::uniform_int_distribution<int>(1, opt.max_dims)(rng);
  const Index t = std::uniform_int_distribution<Index>(opt.min_length, opt.max_length)(rng);
  const int scales = std::uniform_int_distribution<int>(1, opt.max_scales)(rng);
  const int per = std::uniform_int_distribution<int>(1, opt.max_per_measure)(rng);
  auto cfg = EncoderConfig::uniform(scales, {kAllMeasures.begin(), kAllMeasures.end()}, per, t, d);

  GradInstance g;
  g.params = init_params(cfg, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_series = [&] {
    Matrix m(d, t);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return Series(std::move(m));
  };
  for (int i = 0; i < opt.batch; ++i) {
    g.view1.push_back(random_series());
    g.view2.push_back(random_series());
  }
  g.bn = BatchNormState(cfg.d_repr);
  // give the covariance accumulators some history
  g.accs = make_accumulators(scales, cfg.block_size());
  for (auto& acc : g.accs) {
    Matrix z(opt.batch, cfg.block_size());
    for (Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
    acc.update(z, 0.5);
  }
  return g;
}

struct Evaluation {
  double value = 0.0;
  std::vector<Index> pattern;  // identifies the differentiable piece
};

inline double rel_error(const std::vector<double>& a, const std::vector<double>& n) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - n[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(n[i])});
  }
  return scale > 0.0 ? diff / scale : 0.0;
}

// Runs the finite-difference comparison for one instance. `eval` returns the
// objective and its piece signature; `analytic` is flattened in shapelet order.
inline void compare_instance(ModelParams& params, const ParamGrads& analytic,
                             const std::function<Evaluation(const ModelParams&)>& eval, double h,
                             GradCheckComponent& comp) {
  const auto base = eval(params);
  std::vector<double> a, n;
  for (std::size_t f = 0; f < params.shapelets.size(); ++f) {
    Matrix& s = params.shapelets[f];
    for (Index i = 0; i < s.size(); ++i) {
      const double keep = s.data()[i];
      s.data()[i] = keep + h;
      const auto plus = eval(params);
      s.data()[i] = keep - h;
      const auto minus = eval(params);
      s.data()[i] = keep;
      if (plus.pattern != base.pattern || minus.pattern != base.pattern) {
        ++comp.skipped;
        continue;
      }
      a.push_back(analytic[f].data()[i]);
      n.push_back((plus.value - minus.value) / (2.0 * h));
    }
  }
  comp.checked += a.size();
  comp.max_rel_error = std::max(comp.max_rel_error, rel_error(a, n));
  ++comp.instances;
}

}  // namespace detail

inline GradCheckReport run_gradcheck(const GradCheckOptions& opt = {}) {
  struct Term {
    std::string name;
    std::optional<LossConfig> loss;  // empty: encoder alone
  };
  LossConfig coarse_only;
  coarse_only.use_fine = coarse_only.use_alignment = false;
  LossConfig fine_only;
  fine_only.use_coarse = fine_only.use_alignment = false;
  LossConfig align_only;
  align_only.use_coarse = align_only.use_fine = false;
  align_only.lambda = 1.0;
  LossConfig full;
  full.lambda = 1.0;  // weight alignment enough to be visible next to InfoNCE
  const std::vector<Term> terms = {
      {"encoder", std::nullopt}, {"coarse", coarse_only}, {"fine", fine_only}, {"alignment", align_only}, {"total", full}};

  GradCheckReport report;
  for (const auto& term : terms) {
    GradCheckComponent comp;
    comp.name = term.name;
    Rng rng(opt.seed);
    const double sign = term.name == opt.inject_fault ? -1.0 : 1.0;
    for (int k = 0; k < opt.instances; ++k) {
      auto inst = detail::make_grad_instance(opt, rng);
      if (!term.loss) {
        // upstream . sum_i encode(view1_i)
        Vector upstream(inst.params.config.d_repr);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Index i = 0; i < upstream.size(); ++i) upstream(i) = normal(rng);
        ParamGrads g = zero_grads(inst.params);
        for (const auto& x : inst.view1) accumulate_backward(x, inst.params, encode_traced(x, inst.params), upstream, g);
        for (auto& m : g) m *= sign;
        const auto& views = inst.view1;
        detail::compare_instance(
            inst.params, g,
            [&](const ModelParams& p) {
              detail::Evaluation e;
              for (const auto& x : views) {
                const auto tr = encode_traced(x, p);
                e.value += upstream.dot(tr.z);
                for (const auto& m : tr.matches) e.pattern.push_back(m.start);
              }
              return e;
            },
            opt.step, comp);
      } else {
        const LossConfig& lc = *term.loss;
        auto obj = evaluate_batch(inst.params, inst.view1, inst.view2, inst.bn, inst.accs, lc);
        for (auto& m : obj.grads) m *= sign;
        detail::compare_instance(
            inst.params, obj.grads,
            [&](const ModelParams& p) {
              const auto o = evaluate_batch(p, inst.view1, inst.view2, inst.bn, inst.accs, lc, false);
              detail::Evaluation e{o.loss.total, o.match_starts};
              for (const auto s : o.loss.covariance_signs) e.pattern.push_back(s);
              return e;
            },
            opt.step, comp);
      }
    }
    comp.passed = comp.max_rel_error < opt.tolerance && comp.checked > 0;
    report.components.push_back(comp);
  }
  return report;
}

}  // namespace csl
