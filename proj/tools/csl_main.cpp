// Command-line front end: train, encode, classify, cluster, detect,
// gradcheck and sweep-tau. Settings come from an optional JSON config file;
// command-line flags override it.
//
// Exit codes: 0 success, 1 check failure, 2 usage or input error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "csl/csl.hpp"

namespace {

using namespace csl;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

// Raised for bad invocations that CLI11 cannot detect on its own.
struct UsageError : Error {
  using Error::Error;
};

// Flags that override the loaded config when given.
struct Overrides {
  std::string config_path;
  std::optional<std::string> dataset, train_path, test_path, checkpoint, output, loss_csv, format;
  std::optional<int> dims, k, window, train_stride, score_stride, trees;
  std::optional<double> svm_c;
  std::optional<std::vector<double>> taus;
  bool no_label = false, no_normalize = false;

  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, batch_size, num_scales, d_repr;
  std::optional<double> lr, momentum, tau, lambda, lambda_s, alpha;
  std::optional<std::string> measures, scales;
  std::vector<std::string> disable_aug;
  bool no_coarse = false, no_fine = false, no_align = false, symmetrize = false, init_from_data = false,
       no_early_stop = false;

  // gradcheck only
  int gc_instances = 20;
  std::string inject_fault;
};

std::vector<Measure> parse_measure_list(const std::string& text) {
  if (text == "all") return {kAllMeasures.begin(), kAllMeasures.end()};
  std::vector<Measure> out;
  for (const auto tok : detail::split(text, ',')) out.push_back(parse_measure(detail::trim(tok)));
  return out;
}

void apply_scale_range(EncoderConfig& enc, const std::string& which) {
  if (which == "short") {
    enc.min_length_frac = 0.1;
    enc.max_length_frac = 0.4;
  } else if (which == "long") {
    enc.min_length_frac = 0.5;
    enc.max_length_frac = 0.8;
  } else if (which == "all") {
    enc.min_length_frac = 0.1;
    enc.max_length_frac = 0.8;
  } else {
    throw UsageError("--scales must be short, long or all, got '" + which + "'");
  }
}

template <typename T>
void set_if(const std::optional<T>& v, T& out) {
  if (v) out = *v;
}

RunConfig resolve(const std::string& command, const Overrides& o) {
  RunConfig c;
  if (!o.config_path.empty()) {
    if (!std::filesystem::exists(o.config_path)) throw UsageError("config file not found: " + o.config_path);
    c = load_run_config(o.config_path);
  }
  c.command = command;
  set_if(o.dataset, c.dataset);
  set_if(o.train_path, c.train_path);
  set_if(o.test_path, c.test_path);
  set_if(o.checkpoint, c.checkpoint);
  set_if(o.output, c.output);
  set_if(o.loss_csv, c.loss_csv);
  set_if(o.format, c.format);
  set_if(o.dims, c.dims);
  set_if(o.k, c.k);
  set_if(o.window, c.window);
  set_if(o.train_stride, c.train_stride);
  set_if(o.score_stride, c.score_stride);
  set_if(o.trees, c.iforest_trees);
  set_if(o.svm_c, c.svm_c);
  set_if(o.taus, c.tau_grid);
  if (o.no_label) c.has_label = false;
  if (o.no_normalize) c.normalize = false;

  TrainConfig& t = c.train;
  set_if(o.seed, t.seed);
  set_if(o.epochs, t.epochs);
  set_if(o.batch_size, t.batch_size);
  set_if(o.lr, t.lr);
  set_if(o.momentum, t.momentum);
  set_if(o.num_scales, t.encoder.num_scales);
  set_if(o.d_repr, t.encoder.d_repr);
  set_if(o.tau, t.loss.tau);
  set_if(o.lambda, t.loss.lambda);
  set_if(o.lambda_s, t.loss.lambda_s);
  set_if(o.alpha, t.loss.alpha);
  if (o.measures) t.encoder.measures = parse_measure_list(*o.measures);
  if (o.scales) apply_scale_range(t.encoder, *o.scales);
  for (const auto& name : o.disable_aug) t.augment.disable(parse_augment_method(name));
  if (o.no_coarse) t.loss.use_coarse = false;
  if (o.no_fine) t.loss.use_fine = false;
  if (o.no_align) t.loss.use_alignment = false;
  if (o.symmetrize) t.loss.symmetrize = true;
  if (o.init_from_data) t.init_from_data = true;
  if (o.no_early_stop) t.early_stop = false;
  t.validate();
  return c;
}

void require_path(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing ") + what + " path");
  if (!std::filesystem::exists(path)) throw UsageError(std::string(what) + " not found: " + path);
}

bool is_ts_file(const RunConfig& c, const std::string& path) {
  if (c.format == "ts") return true;
  if (c.format == "csv") return false;
  if (c.format != "auto") throw UsageError("--format must be ts, csv or auto");
  return std::filesystem::path(path).extension() == ".ts";
}

Dataset load_dataset(const RunConfig& c, const std::string& path, const char* what) {
  require_path(path, what);
  Dataset ds;
  if (is_ts_file(c, path)) {
    ds = load_ts(path);
  } else {
    std::ifstream in(path);
    try {
      ds = parse_delimited(in, c.dims, c.has_label);
    } catch (const ParseError& e) {
      const std::string msg = e.what();
      throw ParseError(path, e.line(), msg.substr(msg.find(": ") + 2));
    }
  }
  validate(ds);
  if (!ds.equal_length()) ds = equalize(ds);
  return c.normalize ? znormalize(ds) : ds;
}

const std::vector<int>& labels_of(const Dataset& ds, const std::string& path) {
  if (!ds.labels) throw UsageError(path + " has no labels");
  return *ds.labels;
}

std::string write_csv_rows(const Matrix& m) {
  std::ostringstream out;
  out.precision(std::numeric_limits<double>::max_digits10);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
  return out.str();
}

std::string loss_csv(const TrainResult& r) {
  std::ostringstream out;
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "step,L_C,sum_L_F,L_A,total\n";
  for (const auto& s : r.steps)
    out << s.step << ',' << s.coarse << ',' << s.fine << ',' << s.alignment << ',' << s.total << '\n';
  return out.str();
}

json metric(const std::string& task, const std::string& name, double value, const std::string& hash) {
  return json{{"task", task}, {"metric", name}, {"value", value}, {"config_hash", hash}};
}

void emit_metrics(const RunConfig& c, const json& metrics) {
  const std::string text = metrics.dump(1) + "\n";
  if (c.output.empty())
    std::cout << text;
  else
    write_file_atomic(c.output, text);
}

TrainResult train_logged(std::span<const Series> data, const TrainConfig& cfg) {
  return train(data, cfg, [](int epoch, double loss) {
    if (epoch == 1 || epoch % 50 == 0) std::cerr << "epoch " << epoch << " loss " << loss << '\n';
  });
}

int cmd_train(const RunConfig& c) {
  if (c.checkpoint.empty()) throw UsageError("train needs --checkpoint for the output model");
  const Dataset ds = load_dataset(c, c.train_path.empty() ? c.dataset : c.train_path, "training dataset");
  const auto res = train_logged(ds.samples, c.train);
  save_checkpoint(c.checkpoint, res.params, res.batchnorm);
  if (!c.loss_csv.empty()) write_file_atomic(c.loss_csv, loss_csv(res));
  std::cerr << "trained " << res.epochs_run << " epochs, D_repr " << res.params.config.d_repr << ", R "
            << res.params.config.num_scales << '\n';
  return kExitOk;
}

Checkpoint checkpoint_for(const RunConfig& c) {
  require_path(c.checkpoint, "checkpoint");
  return load_checkpoint(c.checkpoint);
}

int cmd_encode(const RunConfig& c) {
  const auto ck = checkpoint_for(c);
  const Dataset ds = load_dataset(c, c.dataset, "dataset");
  const Matrix z = encode_dataset(ds.samples, ck.params, ck.batchnorm);
  if (c.output.empty())
    std::cout << write_csv_rows(z);
  else
    write_file_atomic(c.output, write_csv_rows(z));
  return kExitOk;
}

int cmd_classify(const RunConfig& c) {
  const auto ck = checkpoint_for(c);
  const Dataset tr = load_dataset(c, c.train_path, "training dataset");
  const Dataset te = load_dataset(c, c.test_path, "test dataset");
  const Matrix ztr = encode_dataset(tr.samples, ck.params, ck.batchnorm);
  const Matrix zte = encode_dataset(te.samples, ck.params, ck.batchnorm);
  const auto r = classify(ztr, labels_of(tr, c.train_path), zte, labels_of(te, c.test_path), c.svm_c);
  emit_metrics(c, json::array({metric("classify", "accuracy", r.accuracy, config_hash(c))}));
  return kExitOk;
}

int cmd_cluster(const RunConfig& c) {
  const auto ck = checkpoint_for(c);
  const Dataset ds = load_dataset(c, c.dataset, "dataset");
  const auto& labels = labels_of(ds, c.dataset);
  const int k = c.k > 0 ? c.k : ds.num_classes();
  if (k > static_cast<int>(ds.size())) throw UsageError("k = " + std::to_string(k) + " exceeds the sample count");
  const Matrix z = encode_dataset(ds.samples, ck.params, ck.batchnorm);
  const auto r = cluster(z, labels, k, c.train.seed);
  const auto hash = config_hash(c);
  emit_metrics(c, json::array({metric("cluster", "rand_index", r.rand_index, hash), metric("cluster", "nmi", r.nmi, hash)}));
  return kExitOk;
}

int cmd_detect(const RunConfig& c) {
  require_path(c.dataset, "stream");
  if (c.window < 1) throw UsageError("detect needs --window >= 1");
  std::ifstream in(c.dataset);
  LabeledStream stream;
  try {
    stream = parse_stream(in, c.dims, true);
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    throw ParseError(c.dataset, e.line(), msg.substr(msg.find(": ") + 2));
  }
  if (c.window > stream.series.length())
    throw UsageError("window " + std::to_string(c.window) + " exceeds stream length " +
                     std::to_string(stream.series.length()));
  if (c.normalize) stream.series = znormalize(stream.series);
  DetectionOptions opt;
  opt.window = c.window;
  opt.train_stride = c.train_stride;
  opt.score_stride = c.score_stride;
  opt.trees = c.iforest_trees;
  opt.forest_seed = c.train.seed;
  const auto r = detect_anomalies(stream, opt, c.train);
  if (!c.checkpoint.empty()) save_checkpoint(c.checkpoint, r.model.params, r.model.batchnorm);
  if (std::none_of(r.window_labels.begin(), r.window_labels.end(), [](auto l) { return l != 0; }))
    throw UsageError(c.dataset + " has no flagged windows to score against");
  const auto hash = config_hash(c);
  emit_metrics(c, json::array({metric("detect", "f1", r.f1.f1, hash), metric("detect", "threshold", r.f1.threshold, hash)}));
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& c, const Overrides& o) {
  GradCheckOptions opt;
  opt.instances = o.gc_instances;
  opt.seed = c.train.seed;
  opt.inject_fault = o.inject_fault;
  const auto report = run_gradcheck(opt);
  std::printf("%-10s %10s %14s %8s %8s  %s\n", "component", "instances", "max_rel_error", "checked", "skipped", "status");
  for (const auto& comp : report.components)
    std::printf("%-10s %10d %14.3e %8zu %8zu  %s\n", comp.name.c_str(), comp.instances, comp.max_rel_error, comp.checked,
                comp.skipped, comp.passed ? "PASS" : "FAIL");
  if (report.passed()) return kExitOk;
  for (const auto& comp : report.components)
    if (!comp.passed) std::cerr << "gradcheck failed: " << comp.name << '\n';
  return kExitCheckFailed;
}

int cmd_sweep_tau(const RunConfig& c) {
  const Dataset tr = load_dataset(c, c.train_path, "training dataset");
  const Dataset te = load_dataset(c, c.test_path, "test dataset");
  labels_of(tr, c.train_path);
  labels_of(te, c.test_path);
  const auto sweep = sweep_tau(tr, te, c.tau_grid, c.train, c.svm_c, c.k);
  const auto hash = config_hash(c);
  json out = json::array();
  for (std::size_t i = 0; i < sweep.runs.size(); ++i) {
    const auto& r = sweep.runs[i];
    const std::string task = "sweep-tau[tau=" + json(r.tau).dump() + "]";
    out.push_back(metric(task, "cv_accuracy", r.cv_accuracy, hash));
    out.push_back(metric(task, "accuracy", r.test_accuracy, hash));
    out.push_back(metric(task, "rand_index", r.rand_index, hash));
    out.push_back(metric(task, "nmi", r.nmi, hash));
  }
  out.push_back(metric("sweep-tau", "selected_tau", sweep.runs[sweep.selected].tau, hash));
  emit_metrics(c, out);
  return kExitOk;
}

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_path, "JSON run configuration");
  app->add_option("--seed", o.seed, "random seed");
  app->add_option("--epochs", o.epochs, "maximum epochs");
  app->add_option("--batch-size", o.batch_size, "batch size");
  app->add_option("--lr", o.lr, "learning rate");
  app->add_option("--momentum", o.momentum, "SGD momentum");
  app->add_option("--num-scales", o.num_scales, "number of shapelet lengths R");
  app->add_option("--d-repr", o.d_repr, "embedding width");
  app->add_option("--tau", o.tau, "InfoNCE temperature");
  app->add_option("--lambda", o.lambda, "alignment weight");
  app->add_option("--lambda-s", o.lambda_s, "soft-orthogonality weight");
  app->add_option("--alpha", o.alpha, "covariance accumulator decay");
  app->add_option("--measures", o.measures, "euclidean|cosine|cross|all or a comma list");
  app->add_option("--scales", o.scales, "short|long|all shapelet length range");
  app->add_option("--disable-aug", o.disable_aug, "augmentation to disable (repeatable)");
  app->add_flag("--no-coarse", o.no_coarse, "drop the coarse contrastive term");
  app->add_flag("--no-fine", o.no_fine, "drop the per-scale contrastive terms");
  app->add_flag("--no-align", o.no_align, "drop the alignment term");
  app->add_flag("--symmetrize", o.symmetrize, "also contrast the second view against the first");
  app->add_flag("--init-from-data", o.init_from_data, "initialize shapelets from random training windows");
  app->add_flag("--no-early-stop", o.no_early_stop, "run every epoch");
  app->add_flag("--no-normalize", o.no_normalize, "skip per-dimension z-normalization");
  app->add_option("--format", o.format, "ts|csv|auto");
  app->add_option("--dims", o.dims, "dimension count of delimited input");
  app->add_flag("--no-label", o.no_label, "delimited input has no label column");
  app->add_option("--output,-o", o.output, "output file (default stdout)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive shapelet learning for multivariate time series"};
  app.require_subcommand(1);
  Overrides o;

  auto* train_cmd = app.add_subcommand("train", "train an encoder and write a checkpoint");
  train_cmd->add_option("--train,--dataset", o.train_path, "training dataset");
  train_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint to write");
  train_cmd->add_option("--loss-csv", o.loss_csv, "per-step loss history");

  auto* encode_cmd = app.add_subcommand("encode", "write embeddings of a dataset");
  encode_cmd->add_option("--dataset", o.dataset, "dataset to encode");
  encode_cmd->add_option("--checkpoint", o.checkpoint, "trained checkpoint");

  auto* classify_cmd = app.add_subcommand("classify", "linear SVM accuracy on embeddings");
  classify_cmd->add_option("--train", o.train_path, "labeled training split");
  classify_cmd->add_option("--test", o.test_path, "labeled test split");
  classify_cmd->add_option("--checkpoint", o.checkpoint, "trained checkpoint");
  classify_cmd->add_option("--svm-c", o.svm_c, "SVM regularization C");

  auto* cluster_cmd = app.add_subcommand("cluster", "k-means RI and NMI on embeddings");
  cluster_cmd->add_option("--dataset", o.dataset, "labeled dataset");
  cluster_cmd->add_option("--checkpoint", o.checkpoint, "trained checkpoint");
  cluster_cmd->add_option("--k", o.k, "cluster count (default: class count)");

  auto* detect_cmd = app.add_subcommand("detect", "window anomaly detection with an isolation forest");
  detect_cmd->add_option("--dataset", o.dataset, "stream file: D values and a 0/1 flag per line");
  detect_cmd->add_option("--window,-w", o.window, "window length");
  detect_cmd->add_option("--train-stride", o.train_stride, "stride of training windows (default: window)");
  detect_cmd->add_option("--score-stride", o.score_stride, "stride of scored windows");
  detect_cmd->add_option("--trees", o.trees, "isolation trees");
  detect_cmd->add_option("--checkpoint", o.checkpoint, "optional checkpoint to write");

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check of all gradients");
  gradcheck_cmd->add_option("--instances", o.gc_instances, "random instances per component");
  gradcheck_cmd->add_option("--inject-fault", o.inject_fault, "negate the gradient of this component");

  auto* sweep_cmd = app.add_subcommand("sweep-tau", "one model per temperature, scored downstream");
  sweep_cmd->add_option("--train", o.train_path, "labeled training split");
  sweep_cmd->add_option("--test", o.test_path, "labeled held-out split");
  sweep_cmd->add_option("--taus", o.taus, "temperature grid")->delimiter(',');
  sweep_cmd->add_option("--svm-c", o.svm_c, "SVM regularization C");
  sweep_cmd->add_option("--k", o.k, "cluster count (default: class count)");

  for (auto* sub : {train_cmd, encode_cmd, classify_cmd, cluster_cmd, detect_cmd, gradcheck_cmd, sweep_cmd})
    add_common(sub, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    const RunConfig c = resolve(name, o);
    if (name == "train") return cmd_train(c);
    if (name == "encode") return cmd_encode(c);
    if (name == "classify") return cmd_classify(c);
    if (name == "cluster") return cmd_cluster(c);
    if (name == "detect") return cmd_detect(c);
    if (name == "gradcheck") return cmd_gradcheck(c, o);
    return cmd_sweep_tau(c);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
}
