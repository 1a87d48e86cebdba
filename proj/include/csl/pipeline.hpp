#pragma once

// End-to-end compositions shared by the command-line tool and the acceptance
// suite: train + embed + evaluate for classification, clustering, anomaly
// detection and the temperature sweep.

#include <algorithm>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "csl/data.hpp"
#include "csl/downstream.hpp"
#include "csl/encoder.hpp"
#include "csl/train.hpp"

namespace csl {

inline std::vector<Series> unlabeled(const Dataset& ds) { return ds.samples; }

struct ClassificationResult {
  double accuracy = 0.0;
  std::vector<int> predicted;
};

inline ClassificationResult classify(const Matrix& train_emb, std::span<const int> train_labels, const Matrix& test_emb,
                                     std::span<const int> test_labels, double c = 1.0) {
  if (static_cast<Index>(test_labels.size()) != test_emb.rows())
    throw ShapeError("test labels do not match the number of embeddings");
  SvmOptions opt;
  opt.c = c;
  const auto model = svm_fit(train_emb, train_labels, opt);
  ClassificationResult r;
  r.predicted = svm_predict(model, test_emb);
  r.accuracy = accuracy(test_labels, r.predicted);
  return r;
}

// k-fold accuracy of the linear probe; fold of the i-th sample in label order
// is i mod folds, so folds stay roughly stratified.
inline double cross_val_accuracy(const Matrix& emb, std::span<const int> labels, int folds = 5, double c = 1.0) {
  const auto n = static_cast<std::size_t>(emb.rows());
  if (labels.size() != n) throw ShapeError("labels do not match the number of embeddings");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return labels[a] < labels[b]; });
  std::vector<int> fold(n);
  for (std::size_t i = 0; i < n; ++i) fold[order[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));

  std::size_t hits = 0, total = 0;
  for (int f = 0; f < folds; ++f) {
    std::vector<Index> tr, te;
    for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? te : tr).push_back(static_cast<Index>(i));
    if (te.empty()) continue;
    Matrix xtr(static_cast<Index>(tr.size()), emb.cols()), xte(static_cast<Index>(te.size()), emb.cols());
    std::vector<int> ytr, yte;
    for (std::size_t i = 0; i < tr.size(); ++i) {
      xtr.row(static_cast<Index>(i)) = emb.row(tr[i]);
      ytr.push_back(labels[static_cast<std::size_t>(tr[i])]);
    }
    for (std::size_t i = 0; i < te.size(); ++i) {
      xte.row(static_cast<Index>(i)) = emb.row(te[i]);
      yte.push_back(labels[static_cast<std::size_t>(te[i])]);
    }
    const auto r = classify(xtr, ytr, xte, yte, c);
    hits += static_cast<std::size_t>(std::lround(r.accuracy * static_cast<double>(te.size())));
    total += te.size();
  }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

struct ClusteringResult {
  double rand_index = 0.0;
  double nmi = 0.0;
  std::vector<int> assignment;
};

inline ClusteringResult cluster(const Matrix& emb, std::span<const int> labels, int k, std::uint64_t seed) {
  if (static_cast<Index>(labels.size()) != emb.rows()) throw ShapeError("labels do not match the number of embeddings");
  const auto model = kmeans(emb, k, seed);
  ClusteringResult r;
  r.assignment = model.assignment;
  r.rand_index = rand_index(labels, r.assignment);
  r.nmi = nmi(labels, r.assignment);
  return r;
}

// Flattened-Euclidean 1-nearest-neighbour accuracy on the raw series.
inline double raw_one_nn_accuracy(const Dataset& train, const Dataset& test) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int label = -1;
    for (std::size_t j = 0; j < train.size(); ++j) {
      const double d = (test.samples[i].values - train.samples[j].values).squaredNorm();
      if (d < best) {
        best = d;
        label = (*train.labels)[j];
      }
    }
    hits += label == (*test.labels)[i];
  }
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

struct DetectionOptions {
  Index window = 25;
  Index train_stride = 0;  // 0: non-overlapping windows
  Index score_stride = 1;
  int trees = 100;
  std::uint64_t forest_seed = 0;
};

struct DetectionResult {
  F1Result f1;
  std::vector<double> scores;
  Flags window_labels;
  TrainResult model;
};

// Trains the encoder on windows of the stream, embeds the scoring windows and
// scores them with an isolation forest fitted on the training-window
// embeddings.
inline DetectionResult detect_anomalies(const LabeledStream& stream, const DetectionOptions& opt, TrainConfig cfg) {
  if (opt.window > stream.series.length())
    throw ConfigError("window " + std::to_string(opt.window) + " exceeds stream length " +
                      std::to_string(stream.series.length()));
  const Index train_stride = opt.train_stride > 0 ? opt.train_stride : opt.window;
  const auto train_windows = sliding_windows(stream.series, stream.flags, opt.window, train_stride);
  const auto score_windows = sliding_windows(stream.series, stream.flags, opt.window, opt.score_stride);

  DetectionResult r;
  r.model = train(train_windows.windows, cfg);
  const Matrix train_emb = encode_dataset(train_windows.windows, r.model.params, r.model.batchnorm);
  const Matrix score_emb = encode_dataset(score_windows.windows, r.model.params, r.model.batchnorm);
  const auto forest = iforest_fit(train_emb, opt.trees, 0, opt.forest_seed);
  r.scores = iforest_score(forest, score_emb);
  r.window_labels = score_windows.labels;
  if (std::any_of(r.window_labels.begin(), r.window_labels.end(), [](auto l) { return l != 0; }))
    r.f1 = f1_best_threshold(r.scores, r.window_labels);
  return r;
}

struct TauResult {
  double tau = 0.0;
  double cv_accuracy = 0.0;    // on the training split
  double test_accuracy = 0.0;  // on the held-out split
  double rand_index = 0.0;     // k-means on held-out embeddings
  double nmi = 0.0;
  TrainResult model;
};

struct SweepResult {
  std::vector<TauResult> runs;
  std::size_t selected = 0;  // best cross-validated accuracy, ties to the earlier tau
};

// One model per temperature. The temperature is selected by cross-validated
// probe accuracy on the training split; the held-out split is only scored.
inline SweepResult sweep_tau(const Dataset& train_set, const Dataset& test_set, const std::vector<double>& taus,
                             const TrainConfig& base, double svm_c = 1.0, int k = 0) {
  if (!train_set.labels || !test_set.labels) throw ShapeError("temperature sweep needs labeled splits");
  if (taus.empty()) throw ConfigError("temperature grid is empty");
  SweepResult out;
  const int clusters = k > 0 ? k : std::max(train_set.num_classes(), test_set.num_classes());
  for (const double tau : taus) {
    TrainConfig cfg = base;
    cfg.loss.tau = tau;
    TauResult r;
    r.tau = tau;
    r.model = train(train_set.samples, cfg);
    const Matrix tr = encode_dataset(train_set.samples, r.model.params, r.model.batchnorm);
    const Matrix te = encode_dataset(test_set.samples, r.model.params, r.model.batchnorm);
    r.cv_accuracy = cross_val_accuracy(tr, *train_set.labels, 5, svm_c);
    r.test_accuracy = classify(tr, *train_set.labels, te, *test_set.labels, svm_c).accuracy;
    const auto cl = cluster(te, *test_set.labels, clusters, cfg.seed);
    r.rand_index = cl.rand_index;
    r.nmi = cl.nmi;
    out.runs.push_back(std::move(r));
  }
  for (std::size_t i = 1; i < out.runs.size(); ++i)
    if (out.runs[i].cv_accuracy > out.runs[out.selected].cv_accuracy) out.selected = i;
  return out;
}

}  // namespace csl
