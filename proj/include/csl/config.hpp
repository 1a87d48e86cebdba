#pragma once

// JSON (de)serialization of every configuration struct, the top-level run
// configuration consumed by the command-line tool, and a stable config hash.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "csl/augment.hpp"
#include "csl/encoder.hpp"
#include "csl/error.hpp"
#include "csl/objective.hpp"
#include "csl/train.hpp"

namespace csl {

using json = nlohmann::json;

namespace detail {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
  }
}

}  // namespace detail

inline void to_json(json& j, const EncoderConfig& c) {
  std::vector<std::string> ms;
  for (const auto m : c.measures) ms.emplace_back(to_string(m));
  j = json{{"num_scales", c.num_scales},
           {"measures", ms},
           {"d_repr", c.d_repr},
           {"min_length_frac", c.min_length_frac},
           {"max_length_frac", c.max_length_frac},
           {"reference_length", c.reference_length},
           {"dims", c.dims}};
}

inline void from_json(const json& j, EncoderConfig& c) {
  detail::read_opt(j, "num_scales", c.num_scales);
  if (j.contains("measures")) {
    c.measures.clear();
    for (const auto& m : j.at("measures")) c.measures.push_back(parse_measure(m.get<std::string>()));
  }
  detail::read_opt(j, "d_repr", c.d_repr);
  detail::read_opt(j, "min_length_frac", c.min_length_frac);
  detail::read_opt(j, "max_length_frac", c.max_length_frac);
  detail::read_opt(j, "reference_length", c.reference_length);
  detail::read_opt(j, "dims", c.dims);
}

inline void to_json(json& j, const LossConfig& c) {
  j = json{{"tau", c.tau},           {"lambda", c.lambda},         {"lambda_s", c.lambda_s},
           {"alpha", c.alpha},       {"use_coarse", c.use_coarse}, {"use_fine", c.use_fine},
           {"use_alignment", c.use_alignment}, {"symmetrize", c.symmetrize}};
}

inline void from_json(const json& j, LossConfig& c) {
  detail::read_opt(j, "tau", c.tau);
  detail::read_opt(j, "lambda", c.lambda);
  detail::read_opt(j, "lambda_s", c.lambda_s);
  detail::read_opt(j, "alpha", c.alpha);
  detail::read_opt(j, "use_coarse", c.use_coarse);
  detail::read_opt(j, "use_fine", c.use_fine);
  detail::read_opt(j, "use_alignment", c.use_alignment);
  detail::read_opt(j, "symmetrize", c.symmetrize);
}

inline void to_json(json& j, const AugmentConfig& c) {
  std::vector<std::string> en;
  for (const auto m : c.enabled) en.emplace_back(to_string(m));
  j = json{{"jitter_sigma", c.jitter_sigma},
           {"crop_ratio_range", {c.crop_ratio_low, c.crop_ratio_high}},
           {"warp_speed_changes", c.warp_speed_changes},
           {"warp_max_ratio", c.warp_max_ratio},
           {"quantize_levels", c.quantize_levels},
           {"pool_size", c.pool_size},
           {"enabled", en}};
}

inline void from_json(const json& j, AugmentConfig& c) {
  detail::read_opt(j, "jitter_sigma", c.jitter_sigma);
  if (j.contains("crop_ratio_range")) {
    const auto& r = j.at("crop_ratio_range");
    if (!r.is_array() || r.size() != 2) throw ConfigError("crop_ratio_range must be [low, high]");
    c.crop_ratio_low = r[0].get<double>();
    c.crop_ratio_high = r[1].get<double>();
  }
  detail::read_opt(j, "warp_speed_changes", c.warp_speed_changes);
  detail::read_opt(j, "warp_max_ratio", c.warp_max_ratio);
  detail::read_opt(j, "quantize_levels", c.quantize_levels);
  detail::read_opt(j, "pool_size", c.pool_size);
  if (j.contains("enabled")) {
    c.enabled.clear();
    for (const auto& m : j.at("enabled")) c.enabled.push_back(parse_augment_method(m.get<std::string>()));
  }
}

inline void to_json(json& j, const TrainConfig& c) {
  j = json{{"lr", c.lr},
           {"momentum", c.momentum},
           {"batch_size", c.batch_size},
           {"epochs", c.epochs},
           {"seed", c.seed},
           {"early_stop", c.early_stop},
           {"early_stop_window", c.early_stop_window},
           {"early_stop_tol", c.early_stop_tol},
           {"init_from_data", c.init_from_data},
           {"loss", c.loss},
           {"encoder", c.encoder},
           {"augment", c.augment}};
}

inline void from_json(const json& j, TrainConfig& c) {
  detail::read_opt(j, "lr", c.lr);
  detail::read_opt(j, "momentum", c.momentum);
  detail::read_opt(j, "batch_size", c.batch_size);
  detail::read_opt(j, "epochs", c.epochs);
  detail::read_opt(j, "seed", c.seed);
  detail::read_opt(j, "early_stop", c.early_stop);
  detail::read_opt(j, "early_stop_window", c.early_stop_window);
  detail::read_opt(j, "early_stop_tol", c.early_stop_tol);
  detail::read_opt(j, "init_from_data", c.init_from_data);
  if (j.contains("loss")) from_json(j.at("loss"), c.loss);
  if (j.contains("encoder")) from_json(j.at("encoder"), c.encoder);
  if (j.contains("augment")) from_json(j.at("augment"), c.augment);
}

// Everything one CLI invocation needs. Paths that a command does not use
// stay empty.
struct RunConfig {
  std::string command;
  std::string dataset;     // encode / cluster / detect input
  std::string train_path;  // train / classify / sweep-tau training split
  std::string test_path;   // classify / sweep-tau evaluation split
  std::string checkpoint;
  std::string output;
  std::string loss_csv;
  std::string format = "auto";  // ts | csv | auto (by extension)
  int dims = 1;                 // dimension count for delimited input
  bool has_label = true;        // delimited input carries a label column
  bool normalize = true;
  int k = 0;          // clusters; 0 means the number of classes
  int window = 0;     // anomaly window length
  int train_stride = 0;  // 0 means non-overlapping (= window)
  int score_stride = 1;
  double svm_c = 1.0;
  int iforest_trees = 100;
  std::vector<double> tau_grid{0.1, 0.01, 0.001};
  TrainConfig train;
};

inline void to_json(json& j, const RunConfig& c) {
  j = json{{"command", c.command},
           {"dataset", c.dataset},
           {"train_path", c.train_path},
           {"test_path", c.test_path},
           {"checkpoint", c.checkpoint},
           {"output", c.output},
           {"loss_csv", c.loss_csv},
           {"format", c.format},
           {"dims", c.dims},
           {"has_label", c.has_label},
           {"normalize", c.normalize},
           {"k", c.k},
           {"window", c.window},
           {"train_stride", c.train_stride},
           {"score_stride", c.score_stride},
           {"svm_c", c.svm_c},
           {"iforest_trees", c.iforest_trees},
           {"tau_grid", c.tau_grid},
           {"train", c.train}};
}

inline void from_json(const json& j, RunConfig& c) {
  detail::read_opt(j, "command", c.command);
  detail::read_opt(j, "dataset", c.dataset);
  detail::read_opt(j, "train_path", c.train_path);
  detail::read_opt(j, "test_path", c.test_path);
  detail::read_opt(j, "checkpoint", c.checkpoint);
  detail::read_opt(j, "output", c.output);
  detail::read_opt(j, "loss_csv", c.loss_csv);
  detail::read_opt(j, "format", c.format);
  detail::read_opt(j, "dims", c.dims);
  detail::read_opt(j, "has_label", c.has_label);
  detail::read_opt(j, "normalize", c.normalize);
  detail::read_opt(j, "k", c.k);
  detail::read_opt(j, "window", c.window);
  detail::read_opt(j, "train_stride", c.train_stride);
  detail::read_opt(j, "score_stride", c.score_stride);
  detail::read_opt(j, "svm_c", c.svm_c);
  detail::read_opt(j, "iforest_trees", c.iforest_trees);
  detail::read_opt(j, "tau_grid", c.tau_grid);
  if (j.contains("train")) from_json(j.at("train"), c.train);
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  try {
    return json::parse(in).get<RunConfig>();
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// 64-bit FNV-1a over the compact JSON dump, as 16 hex digits.
inline std::string config_hash(const json& j) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_hash(const RunConfig& c) { return config_hash(json(c)); }

}  // namespace csl
