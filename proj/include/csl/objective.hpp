#pragma once

// Training objective over a pair of embedding batches Z1 (first view) and
// Z2 (second view), each B x D_repr with R scale blocks of K columns:
//
//   total = coarse + sum_r fine_r + lambda * alignment
//
// coarse and fine_r are InfoNCE sums anchored on Z1 rows against all rows of
// Z2 (whole embedding vs. one block). alignment pulls every scale block
// towards the mean block and penalizes the off-diagonal entries of an
// exponentially accumulated covariance estimate.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "csl/data.hpp"
#include "csl/error.hpp"

namespace csl {

struct LossConfig {
  double tau = 0.1;
  double lambda = 0.01;    // alignment weight
  double lambda_s = 1.0;   // soft-orthogonality weight inside alignment
  double alpha = 0.5;      // covariance decay
  bool use_coarse = true;
  bool use_fine = true;
  bool use_alignment = true;
  bool symmetrize = false;  // also anchor on Z2 against Z1

  void validate() const {
    if (!(tau > 0.0)) throw ConfigError("temperature must be > 0");
    if (lambda < 0.0 || lambda_s < 0.0) throw ConfigError("loss weights must be >= 0");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("covariance decay must be in [0, 1)");
  }
};

// Cosine similarity; 0 when either vector has norm below 1e-12.
template <typename A, typename B>
double cosine_similarity(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const double na = a.norm(), nb = b.norm();
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return a.dot(b) / (na * nb);
}

namespace detail {

// Adds coef * d cos(a, b) / da into ga and coef * d cos(a, b) / db into gb.
template <typename A, typename B, typename GA, typename GB>
void add_cosine_gradient(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, double coef,
                         Eigen::MatrixBase<GA>& ga, Eigen::MatrixBase<GB>& gb) {
  const double na = a.norm(), nb = b.norm();
  if (na < 1e-12 || nb < 1e-12 || coef == 0.0) return;
  const double c = a.dot(b) / (na * nb);
  ga += coef * (b / (na * nb) - c * a / (na * na));
  gb += coef * (a / (na * nb) - c * b / (nb * nb));
}

}  // namespace detail

// -log softmax_p over cosine similarities / tau, where `candidates` holds one
// candidate per row and row `positive` is the positive. If grad_anchor or
// grad_candidates are given, gradients are added into them.
template <typename A, typename C>
double info_nce(const Eigen::MatrixBase<A>& anchor, Index positive, const Eigen::MatrixBase<C>& candidates, double tau,
                Vector* grad_anchor = nullptr, Matrix* grad_candidates = nullptr) {
  const Index n = candidates.rows();
  if (n == 0) throw ShapeError("InfoNCE needs at least one candidate");
  if (positive < 0 || positive >= n) throw ShapeError("positive index out of range");
  if (candidates.cols() != anchor.size()) throw ShapeError("anchor and candidates differ in length");
  if (!(tau > 0.0)) throw ConfigError("temperature must be > 0");

  Vector logits(n);
  for (Index k = 0; k < n; ++k) logits(k) = cosine_similarity(anchor, candidates.row(k).transpose()) / tau;
  const double mx = logits.maxCoeff();
  const double denom = (logits.array() - mx).exp().sum();
  const double loss = mx + std::log(denom) - logits(positive);

  if (grad_anchor || grad_candidates) {
    Vector ga = Vector::Zero(anchor.size());
    for (Index k = 0; k < n; ++k) {
      const double p = std::exp(logits(k) - mx) / denom;
      const double coef = (p - (k == positive ? 1.0 : 0.0)) / tau;
      Vector gc = Vector::Zero(anchor.size());
      detail::add_cosine_gradient(anchor, candidates.row(k).transpose(), coef, ga, gc);
      if (grad_candidates) grad_candidates->row(k) += gc.transpose();
    }
    if (grad_anchor) *grad_anchor += ga;
  }
  return loss;
}

namespace detail {

// sum_i InfoNCE(anchors.row(i), candidates) with row i as positive, restricted
// to columns [col, col + width).
inline double contrast_columns(const Matrix& anchors, const Matrix& candidates, Index col, Index width, double tau,
                               Matrix* g_anchors, Matrix* g_candidates) {
  const Index b = anchors.rows();
  const Matrix cand = candidates.middleCols(col, width);
  double total = 0.0;
  Matrix gc = Matrix::Zero(b, width);
  for (Index i = 0; i < b; ++i) {
    Vector ga = Vector::Zero(width);
    const bool want = g_anchors || g_candidates;
    total += info_nce(anchors.row(i).segment(col, width).transpose(), i, cand, tau, want ? &ga : nullptr,
                      want ? &gc : nullptr);
    if (g_anchors) g_anchors->row(i).segment(col, width) += ga.transpose();
  }
  if (g_candidates) g_candidates->middleCols(col, width) += gc;
  return total;
}

inline void check_pair(const Matrix& z1, const Matrix& z2, int num_scales) {
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols()) throw ShapeError("embedding views differ in shape");
  if (z1.rows() < 2) throw ShapeError("contrastive losses need a batch of at least 2");
  if (num_scales < 1 || z1.cols() % num_scales != 0) throw ShapeError("embedding width is not a multiple of the scale count");
}

}  // namespace detail

// InfoNCE over the full embedding, anchors from z1, candidates from z2.
inline double coarse_loss(const Matrix& z1, const Matrix& z2, double tau, Matrix* g1 = nullptr, Matrix* g2 = nullptr) {
  detail::check_pair(z1, z2, 1);
  return detail::contrast_columns(z1, z2, 0, z1.cols(), tau, g1, g2);
}

// InfoNCE restricted to scale block `scale` (zero-based).
inline double fine_loss(const Matrix& z1, const Matrix& z2, int num_scales, int scale, double tau,
                        Matrix* g1 = nullptr, Matrix* g2 = nullptr) {
  detail::check_pair(z1, z2, num_scales);
  if (scale < 0 || scale >= num_scales) throw ShapeError("scale index out of range");
  const Index k = z1.cols() / num_scales;
  return detail::contrast_columns(z1, z2, scale * k, k, tau, g1, g2);
}

inline double multi_grained_loss(const Matrix& z1, const Matrix& z2, int num_scales, double tau) {
  double total = coarse_loss(z1, z2, tau);
  for (int r = 0; r < num_scales; ++r) total += fine_loss(z1, z2, num_scales, r, tau);
  return total;
}

// Exponentially decayed covariance sum and its normalizer:
//   C_accu <- alpha * C_accu + Z^T Z / (B - 1),  c <- alpha * c + 1.
struct CovarianceAccumulator {
  Matrix accumulated;
  double normalizer = 0.0;

  CovarianceAccumulator() = default;
  explicit CovarianceAccumulator(Index k) : accumulated(Matrix::Zero(k, k)) {}

  Index size() const { return accumulated.rows(); }

  // The estimate the next update with `zb` would produce, without mutating.
  Matrix peek(const Matrix& zb, double alpha) const {
    if (zb.rows() < 2) throw ShapeError("covariance update needs a batch of at least 2");
    if (zb.cols() != size()) throw ShapeError("covariance accumulator width mismatch");
    const Matrix cb = zb.transpose() * zb / static_cast<double>(zb.rows() - 1);
    return (alpha * accumulated + cb) / (alpha * normalizer + 1.0);
  }

  Matrix update(const Matrix& zb, double alpha) {
    if (zb.rows() < 2) throw ShapeError("covariance update needs a batch of at least 2");
    if (zb.cols() != size()) throw ShapeError("covariance accumulator width mismatch");
    const Matrix cb = zb.transpose() * zb / static_cast<double>(zb.rows() - 1);
    accumulated = alpha * accumulated + cb;
    normalizer = alpha * normalizer + 1.0;
    return accumulated / normalizer;
  }
};

inline Matrix cov_update(CovarianceAccumulator& acc, const Matrix& zb, double alpha) { return acc.update(zb, alpha); }

// Sum of |C(i, j)| over the strict upper triangle.
inline double soft_orth_loss(const Matrix& c) {
  if (c.rows() != c.cols()) throw ShapeError("soft orthogonality needs a square matrix");
  double total = 0.0;
  for (Index i = 0; i < c.rows(); ++i)
    for (Index j = i + 1; j < c.cols(); ++j) total += std::abs(c(i, j));
  return total;
}

// One accumulator per (view, scale): index view * R + scale.
using AccumulatorSet = std::vector<CovarianceAccumulator>;

inline AccumulatorSet make_accumulators(int num_scales, Index block) {
  return AccumulatorSet(static_cast<std::size_t>(2 * num_scales), CovarianceAccumulator(block));
}

struct AlignmentTerms {
  double frobenius = 0.0;  // sum over views and scales of ||Z_r - Zbar||_F^2
  double soft_orth = 0.0;  // sum over views and scales of L_S(Z_r)
  AccumulatorSet next;     // accumulators after this batch
  std::vector<signed char> signs;  // sign of every penalized covariance entry

  double value(double lambda_s) const { return frobenius + lambda_s * soft_orth; }
};

// Alignment terms over both views. Accumulator history is treated as a
// constant: gradients flow only through the current batch covariance.
inline AlignmentTerms alignment_loss(const Matrix& z1, const Matrix& z2, int num_scales, const AccumulatorSet& accs,
                                     const LossConfig& cfg, Matrix* g1 = nullptr, Matrix* g2 = nullptr) {
  detail::check_pair(z1, z2, num_scales);
  const Index k = z1.cols() / num_scales;
  if (accs.size() != static_cast<std::size_t>(2 * num_scales)) throw ShapeError("expected one accumulator per view and scale");
  const double bm1 = static_cast<double>(z1.rows() - 1);

  AlignmentTerms out;
  out.next = accs;
  const Matrix* views[2] = {&z1, &z2};
  Matrix* grads[2] = {g1, g2};
  for (int v = 0; v < 2; ++v) {
    const Matrix& z = *views[v];
    Matrix center = Matrix::Zero(z.rows(), k);
    for (int r = 0; r < num_scales; ++r) center += z.middleCols(r * k, k);
    center /= static_cast<double>(num_scales);

    for (int r = 0; r < num_scales; ++r) {
      const Matrix block = z.middleCols(r * k, k);
      const Matrix diff = block - center;
      out.frobenius += diff.squaredNorm();

      auto& acc = out.next[static_cast<std::size_t>(v * num_scales + r)];
      const Matrix c_hat = acc.update(block, cfg.alpha);
      out.soft_orth += soft_orth_loss(c_hat);
      for (Index i = 0; i < k; ++i)
        for (Index j = i + 1; j < k; ++j) out.signs.push_back(static_cast<signed char>((c_hat(i, j) > 0) - (c_hat(i, j) < 0)));

      if (Matrix* g = grads[v]) {
        // d/dZ_r sum_q ||Z_q - Zbar||^2 = 2 (Z_r - Zbar) since sum_q (Z_q - Zbar) = 0
        Matrix gb = 2.0 * diff;
        if (cfg.lambda_s != 0.0) {
          Matrix sign = Matrix::Zero(k, k);
          for (Index i = 0; i < k; ++i)
            for (Index j = i + 1; j < k; ++j) {
              const double e = c_hat(i, j);
              sign(i, j) = e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
            }
          gb += cfg.lambda_s / (acc.normalizer * bm1) * block * (sign + sign.transpose());
        }
        g->middleCols(r * k, k) += gb;
      }
    }
  }
  return out;
}

struct LossBreakdown {
  double coarse = 0.0;
  double fine = 0.0;  // summed over scales
  double alignment = 0.0;  // frobenius + lambda_s * soft_orth, before lambda
  double frobenius = 0.0;
  double soft_orth = 0.0;
  double total = 0.0;
  Matrix grad1, grad2;  // d total / d z1, d total / d z2 (empty unless requested)
  AccumulatorSet next;
  std::vector<signed char> covariance_signs;
};

inline LossBreakdown total_loss(const Matrix& z1, const Matrix& z2, int num_scales, const AccumulatorSet& accs,
                                const LossConfig& cfg, bool with_grad = true) {
  cfg.validate();
  detail::check_pair(z1, z2, num_scales);
  const Index k = z1.cols() / num_scales;
  LossBreakdown out;
  Matrix g1, g2;
  if (with_grad) {
    g1 = Matrix::Zero(z1.rows(), z1.cols());
    g2 = Matrix::Zero(z2.rows(), z2.cols());
  }
  Matrix* p1 = with_grad ? &g1 : nullptr;
  Matrix* p2 = with_grad ? &g2 : nullptr;

  auto contrast = [&](const Matrix& a, const Matrix& c, Matrix* ga, Matrix* gc) {
    if (cfg.use_coarse) out.coarse += detail::contrast_columns(a, c, 0, a.cols(), cfg.tau, ga, gc);
    if (cfg.use_fine)
      for (int r = 0; r < num_scales; ++r) out.fine += detail::contrast_columns(a, c, r * k, k, cfg.tau, ga, gc);
  };
  contrast(z1, z2, p1, p2);
  if (cfg.symmetrize) contrast(z2, z1, p2, p1);

  if (cfg.use_alignment && cfg.lambda != 0.0) {
    Matrix a1, a2;
    if (with_grad) {
      a1 = Matrix::Zero(z1.rows(), z1.cols());
      a2 = Matrix::Zero(z2.rows(), z2.cols());
    }
    auto terms = alignment_loss(z1, z2, num_scales, accs, cfg, with_grad ? &a1 : nullptr, with_grad ? &a2 : nullptr);
    out.frobenius = terms.frobenius;
    out.soft_orth = terms.soft_orth;
    out.alignment = terms.value(cfg.lambda_s);
    out.next = std::move(terms.next);
    out.covariance_signs = std::move(terms.signs);
    if (with_grad) {
      g1 += cfg.lambda * a1;
      g2 += cfg.lambda * a2;
    }
  } else {
    out.next = accs;
  }
  out.total = out.coarse + out.fine + cfg.lambda * out.alignment;
  if (with_grad) {
    out.grad1 = std::move(g1);
    out.grad2 = std::move(g2);
  }
  return out;
}

}  // namespace csl
