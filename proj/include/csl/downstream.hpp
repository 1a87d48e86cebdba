#pragma once

// Evaluation heads on frozen embeddings: a linear SVM probe, k-means with
// Rand index / NMI, and an isolation forest with best-threshold F1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "csl/data.hpp"
#include "csl/error.hpp"

namespace csl {

// ---------------------------------------------------------------------------
// Linear SVM (one-vs-rest, full-batch Pegasos subgradient descent)
// ---------------------------------------------------------------------------

// Minimizes, per class, lambda/2 ||w||^2 + mean_i max(0, 1 - y_i (w.x_i + b))
// with lambda = 1 / C. The bias is an extra regularized coordinate. Using the
// mean hinge makes the solution invariant to duplicating the training set.
struct LinearSvmModel {
  Matrix weights;  // one row per class (a single row for binary problems)
  Vector bias;
  int num_classes = 0;
  double c = 1.0;

  Vector decision(const Eigen::Ref<const Vector>& x) const { return weights * x + bias; }
};

struct SvmOptions {
  double c = 1.0;
  int iterations = 2000;
  // When non-null, receives the objective of the averaged iterate after every
  // iteration (first class only) for monitoring.
  std::vector<double>* trace = nullptr;
};

namespace detail {

inline double svm_objective(const Matrix& x, const Vector& y, const Vector& w, double b, double lambda) {
  double hinge = 0.0;
  for (Index i = 0; i < x.rows(); ++i) hinge += std::max(0.0, 1.0 - y(i) * (x.row(i).dot(w) + b));
  return 0.5 * lambda * w.squaredNorm() + hinge / static_cast<double>(x.rows());
}

// Binary problem with targets in {-1, +1}; returns the Polyak average of the
// iterates.
inline std::pair<Vector, double> pegasos(const Matrix& x, const Vector& y, double lambda, int iterations,
                                         std::vector<double>* trace) {
  const Index n = x.rows();
  Vector w = Vector::Zero(x.cols());
  double b = 0.0;
  Vector w_avg = Vector::Zero(x.cols());
  double b_avg = 0.0;
  for (int t = 1; t <= iterations; ++t) {
    const double eta = 1.0 / (lambda * t);
    Vector gw = lambda * w;
    double gb = 0.0;  // bias is not regularized
    Vector hinge_w = Vector::Zero(x.cols());
    double hinge_b = 0.0;
    for (Index i = 0; i < n; ++i) {
      if (y(i) * (x.row(i).dot(w) + b) < 1.0) {
        hinge_w -= y(i) * x.row(i).transpose();
        hinge_b -= y(i);
      }
    }
    gw += hinge_w / static_cast<double>(n);
    gb += hinge_b / static_cast<double>(n);
    w -= eta * gw;
    b -= eta * gb;
    w_avg += (w - w_avg) / t;
    b_avg += (b - b_avg) / t;
    if (trace) trace->push_back(svm_objective(x, y, w_avg, b_avg, lambda));
  }
  return {w_avg, b_avg};
}

}  // namespace detail

inline LinearSvmModel svm_fit(const Matrix& x, std::span<const int> labels, const SvmOptions& opt = {}) {
  if (static_cast<Index>(labels.size()) != x.rows()) throw ShapeError("label count does not match embedding rows");
  if (!(opt.c > 0.0)) throw ConfigError("SVM regularization C must be > 0");
  if (opt.iterations < 1) throw ConfigError("SVM needs at least one iteration");
  int classes = 0;
  for (const int l : labels) {
    if (l < 0) throw ShapeError("labels must be non-negative class indices");
    classes = std::max(classes, l + 1);
  }
  std::vector<int> seen(static_cast<std::size_t>(classes), 0);
  for (const int l : labels) seen[static_cast<std::size_t>(l)] = 1;
  if (std::count(seen.begin(), seen.end(), 1) < 2) throw ShapeError("SVM needs at least two classes");

  const double lambda = 1.0 / opt.c;
  LinearSvmModel model;
  model.num_classes = classes;
  model.c = opt.c;
  const int heads = classes == 2 ? 1 : classes;
  model.weights = Matrix::Zero(heads, x.cols());
  model.bias = Vector::Zero(heads);
  for (int k = 0; k < heads; ++k) {
    const int positive = classes == 2 ? 1 : k;
    Vector y(x.rows());
    for (Index i = 0; i < x.rows(); ++i) y(i) = labels[static_cast<std::size_t>(i)] == positive ? 1.0 : -1.0;
    auto [w, b] = detail::pegasos(x, y, lambda, opt.iterations, k == 0 ? opt.trace : nullptr);
    model.weights.row(k) = w.transpose();
    model.bias(k) = b;
  }
  return model;
}

inline std::vector<int> svm_predict(const LinearSvmModel& model, const Matrix& x) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) {
    const Vector d = model.decision(x.row(i).transpose());
    if (model.num_classes == 2) {
      out.push_back(d(0) >= 0.0 ? 1 : 0);
    } else {
      Index best = 0;
      d.maxCoeff(&best);
      out.push_back(static_cast<int>(best));
    }
  }
  return out;
}

inline double accuracy(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw ShapeError("accuracy inputs differ in length");
  if (truth.empty()) throw ShapeError("accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == predicted[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------------------
// K-means (k-means++ seeding, Lloyd iterations, best of several restarts)
// ---------------------------------------------------------------------------

struct KMeansModel {
  Matrix centroids;
  std::vector<int> assignment;
  double inertia = 0.0;
  int iterations = 0;
  std::vector<double> inertia_history;  // inertia after each Lloyd iteration of the kept run
};

struct KMeansOptions {
  int restarts = 10;
  int max_iterations = 300;
  // Inertia of every restart, in order, when non-null.
  std::vector<double>* restart_inertia = nullptr;
};

namespace detail {

inline KMeansModel kmeans_once(const Matrix& x, int k, Rng& rng, int max_iterations) {
  const Index n = x.rows();
  KMeansModel m;
  m.centroids.resize(k, x.cols());

  // k-means++ seeding
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  Index first = std::uniform_int_distribution<Index>(0, n - 1)(rng);
  m.centroids.row(0) = x.row(first);
  for (int c = 1; c < k; ++c) {
    for (Index i = 0; i < n; ++i)
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], (x.row(i) - m.centroids.row(c - 1)).squaredNorm());
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    Index pick = 0;
    if (total <= 0.0) {
      pick = std::uniform_int_distribution<Index>(0, n - 1)(rng);
    } else {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (pick = 0; pick < n - 1; ++pick) {
        r -= d2[static_cast<std::size_t>(pick)];
        if (r < 0.0) break;
      }
    }
    m.centroids.row(c) = x.row(pick);
  }

  m.assignment.assign(static_cast<std::size_t>(n), -1);
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (int it = 1; it <= max_iterations; ++it) {
    bool changed = false;
    double inertia = 0.0;
    for (Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (x.row(i) - m.centroids.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      dist[static_cast<std::size_t>(i)] = best_d;
      inertia += best_d;
      if (m.assignment[static_cast<std::size_t>(i)] != best) {
        m.assignment[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    m.iterations = it;
    if (!changed && it > 1) {
      m.inertia = inertia;
      break;
    }
    // centroid update; an empty cluster takes the point farthest from its centroid
    Matrix sums = Matrix::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(m.assignment[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(m.assignment[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        m.centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
      } else {
        const auto far = std::max_element(dist.begin(), dist.end()) - dist.begin();
        m.centroids.row(c) = x.row(far);
        dist[static_cast<std::size_t>(far)] = 0.0;
      }
    }
    double after = 0.0;
    for (Index i = 0; i < n; ++i) after += (x.row(i) - m.centroids.row(m.assignment[static_cast<std::size_t>(i)])).squaredNorm();
    m.inertia_history.push_back(after);
    m.inertia = after;
  }
  // final inertia against the final centroids
  double inertia = 0.0;
  for (Index i = 0; i < n; ++i) inertia += (x.row(i) - m.centroids.row(m.assignment[static_cast<std::size_t>(i)])).squaredNorm();
  m.inertia = inertia;
  return m;
}

}  // namespace detail

inline KMeansModel kmeans(const Matrix& x, int k, std::uint64_t seed, const KMeansOptions& opt = {}) {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (k > x.rows()) throw ConfigError("k = " + std::to_string(k) + " exceeds the number of points " + std::to_string(x.rows()));
  if (opt.restarts < 1 || opt.max_iterations < 1) throw ConfigError("k-means needs restarts and iterations >= 1");
  Rng rng(seed);
  KMeansModel best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < opt.restarts; ++r) {
    auto m = detail::kmeans_once(x, k, rng, opt.max_iterations);
    if (opt.restart_inertia) opt.restart_inertia->push_back(m.inertia);
    if (m.inertia < best.inertia) best = std::move(m);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Partition agreement metrics
// ---------------------------------------------------------------------------

namespace detail {

struct Contingency {
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> rows, cols;
  double n = 0.0;
};

inline Contingency contingency(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw ShapeError("partitions differ in length");
  Contingency c;
  for (std::size_t i = 0; i < a.size(); ++i) {
    c.joint[{a[i], b[i]}] += 1.0;
    c.rows[a[i]] += 1.0;
    c.cols[b[i]] += 1.0;
  }
  c.n = static_cast<double>(a.size());
  return c;
}

inline double pairs(double m) { return m * (m - 1.0) / 2.0; }

}  // namespace detail

// Fraction of point pairs on which the two partitions agree.
inline double rand_index(std::span<const int> a, std::span<const int> b) {
  const auto c = detail::contingency(a, b);
  if (c.n < 2) return 1.0;
  double same_both = 0.0, same_a = 0.0, same_b = 0.0;
  for (const auto& [key, v] : c.joint) same_both += detail::pairs(v);
  for (const auto& [key, v] : c.rows) same_a += detail::pairs(v);
  for (const auto& [key, v] : c.cols) same_b += detail::pairs(v);
  const double total = detail::pairs(c.n);
  const double agree = total + 2.0 * same_both - same_a - same_b;
  return agree / total;
}

enum class NmiNorm { geometric, arithmetic };

// I(a; b) / sqrt(H(a) H(b)) with natural logs; 0 when either entropy is 0.
inline double nmi(std::span<const int> a, std::span<const int> b, NmiNorm norm = NmiNorm::geometric) {
  const auto c = detail::contingency(a, b);
  if (c.n == 0) throw ShapeError("NMI of empty partitions");
  auto entropy = [&](const std::map<int, double>& m) {
    double h = 0.0;
    for (const auto& [key, v] : m) h -= v / c.n * std::log(v / c.n);
    return h;
  };
  const double ha = entropy(c.rows), hb = entropy(c.cols);
  if (ha <= 0.0 || hb <= 0.0) return 0.0;
  double mi = 0.0;
  for (const auto& [key, v] : c.joint) {
    const double pij = v / c.n;
    mi += pij * std::log(pij / (c.rows.at(key.first) / c.n * (c.cols.at(key.second) / c.n)));
  }
  mi = std::max(mi, 0.0);
  const double denom = norm == NmiNorm::geometric ? std::sqrt(ha * hb) : 0.5 * (ha + hb);
  return std::min(1.0, mi / denom);
}

// ---------------------------------------------------------------------------
// Isolation forest
// ---------------------------------------------------------------------------

// Average path length of an unsuccessful BST search among n points:
// c(n) = 2 H(n-1) - 2 (n-1) / n, with c(1) = 0 and exact harmonic numbers.
inline double average_path_length(std::size_t n) {
  if (n <= 1) return 0.0;
  double h = 0.0;
  for (std::size_t i = 1; i < n; ++i) h += 1.0 / static_cast<double>(i);
  return 2.0 * h - 2.0 * static_cast<double>(n - 1) / static_cast<double>(n);
}

struct IsolationTree {
  struct Node {
    int feature = -1;  // -1 marks an external node
    double threshold = 0.0;
    int left = -1, right = -1;
    std::size_t size = 0;  // training points that reached an external node
  };
  std::vector<Node> nodes;

  double path_length(const Eigen::Ref<const Vector>& x) const {
    int idx = 0;
    double depth = 0.0;
    while (nodes[static_cast<std::size_t>(idx)].feature >= 0) {
      const auto& nd = nodes[static_cast<std::size_t>(idx)];
      idx = x(nd.feature) < nd.threshold ? nd.left : nd.right;
      depth += 1.0;
    }
    return depth + average_path_length(nodes[static_cast<std::size_t>(idx)].size);
  }
};

struct IsolationForest {
  std::vector<IsolationTree> trees;
  std::size_t subsample = 0;
};

namespace detail {

inline int grow_itree(IsolationTree& tree, const Matrix& x, std::vector<Index>& idx, std::size_t begin, std::size_t end,
                      int depth, int max_depth, Rng& rng) {
  const int node_id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  const std::size_t n = end - begin;
  if (depth >= max_depth || n <= 1) {
    tree.nodes[static_cast<std::size_t>(node_id)].size = n;
    return node_id;
  }
  // choose among features that still vary inside this node
  std::vector<int> candidates;
  std::vector<std::pair<double, double>> ranges;
  for (Index f = 0; f < x.cols(); ++f) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = std::min(lo, x(idx[i], f));
      hi = std::max(hi, x(idx[i], f));
    }
    if (hi > lo) {
      candidates.push_back(static_cast<int>(f));
      ranges.emplace_back(lo, hi);
    }
  }
  if (candidates.empty()) {
    tree.nodes[static_cast<std::size_t>(node_id)].size = n;
    return node_id;
  }
  const auto pick = std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng);
  const int feature = candidates[pick];
  const auto [lo, hi] = ranges[pick];
  double threshold = std::uniform_real_distribution<double>(lo, hi)(rng);
  if (threshold <= lo) threshold = std::nextafter(lo, hi);
  const auto mid = std::partition(idx.begin() + static_cast<std::ptrdiff_t>(begin), idx.begin() + static_cast<std::ptrdiff_t>(end),
                                  [&](Index i) { return x(i, feature) < threshold; }) -
                   idx.begin();
  const int left = grow_itree(tree, x, idx, begin, static_cast<std::size_t>(mid), depth + 1, max_depth, rng);
  const int right = grow_itree(tree, x, idx, static_cast<std::size_t>(mid), end, depth + 1, max_depth, rng);
  auto& nd = tree.nodes[static_cast<std::size_t>(node_id)];
  nd.feature = feature;
  nd.threshold = threshold;
  nd.left = left;
  nd.right = right;
  return node_id;
}

}  // namespace detail

// psi = 0 selects min(256, N). Each tree sees psi points drawn without
// replacement and is grown to depth ceil(log2 psi).
inline IsolationForest iforest_fit(const Matrix& x, int n_trees = 100, std::size_t psi = 0, std::uint64_t seed = 0) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (n < 2) throw ShapeError("isolation forest needs at least 2 points");
  if (n_trees < 1) throw ConfigError("isolation forest needs at least one tree");
  if (psi == 0) psi = std::min<std::size_t>(256, n);
  psi = std::min(psi, n);
  if (psi < 2) throw ConfigError("isolation forest subsample must be >= 2");
  const int max_depth = static_cast<int>(std::ceil(std::log2(static_cast<double>(psi))));

  Rng rng(seed);
  IsolationForest forest;
  forest.subsample = psi;
  std::vector<Index> all(n);
  std::iota(all.begin(), all.end(), Index{0});
  for (int t = 0; t < n_trees; ++t) {
    // partial Fisher-Yates: first psi entries become the subsample
    for (std::size_t i = 0; i < psi; ++i) {
      const auto j = std::uniform_int_distribution<std::size_t>(i, n - 1)(rng);
      std::swap(all[i], all[j]);
    }
    std::vector<Index> idx(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(psi));
    IsolationTree tree;
    detail::grow_itree(tree, x, idx, 0, psi, 0, max_depth, rng);
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

// s(x) = 2^(-E[h(x)] / c(psi)); higher means more anomalous.
inline std::vector<double> iforest_score(const IsolationForest& forest, const Matrix& x) {
  const double norm = average_path_length(forest.subsample);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) {
    double h = 0.0;
    for (const auto& t : forest.trees) h += t.path_length(x.row(i).transpose());
    h /= static_cast<double>(forest.trees.size());
    out.push_back(std::pow(2.0, -h / norm));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Best-threshold F1
// ---------------------------------------------------------------------------

struct F1Result {
  double f1 = 0.0;
  double threshold = 0.0;
};

// Predicts positive when score >= threshold and sweeps every distinct score.
// Ties in F1 resolve to the smallest threshold.
inline F1Result f1_best_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  const auto positives = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
  if (positives == 0) throw ShapeError("F1 needs at least one positive label");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  F1Result best{-1.0, 0.0};
  double tp = 0.0, fp = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    const double thr = scores[order[k]];
    while (k < order.size() && scores[order[k]] == thr) {
      (labels[order[k]] ? tp : fp) += 1.0;
      ++k;
    }
    const double f1 = 2.0 * tp / (tp + fp + positives);
    if (f1 >= best.f1) best = {f1, thr};  // later thresholds are smaller
  }
  return best;
}

}  // namespace csl
