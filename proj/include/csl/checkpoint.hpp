#pragma once

// Model checkpoints are JSON documents:
//
//   {
//     "format": "csl-checkpoint", "version": 1,
//     "encoder": { ...EncoderConfig... },
//     "shapelets": [ {"scale": r, "measure": "...", "index": v,
//                     "rows": D, "cols": L, "data": [row-major values]}, ... ],
//     "batchnorm": {"momentum": m, "epsilon": e, "running_mean": [...], "running_var": [...]}
//   }
//
// Shapelets appear in embedding order (scale, then measure, then index).
// Doubles are written with round-trip precision, so save/load is lossless.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "csl/config.hpp"
#include "csl/encoder.hpp"
#include "csl/error.hpp"
#include "csl/train.hpp"

namespace csl {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  BatchNormState batchnorm;
};

inline json checkpoint_to_json(const ModelParams& params, const BatchNormState& bn) {
  json shapelets = json::array();
  const auto layout = feature_layout(params.config);
  for (std::size_t f = 0; f < params.shapelets.size(); ++f) {
    const Matrix& s = params.shapelets[f];
    shapelets.push_back({{"scale", layout[f].scale},
                         {"measure", to_string(layout[f].measure)},
                         {"index", layout[f].index},
                         {"rows", s.rows()},
                         {"cols", s.cols()},
                         {"data", std::vector<double>(s.data(), s.data() + s.size())}});
  }
  return json{{"format", "csl-checkpoint"},
              {"version", kCheckpointVersion},
              {"encoder", params.config},
              {"shapelets", shapelets},
              {"batchnorm",
               {{"momentum", bn.momentum},
                {"epsilon", bn.epsilon},
                {"running_mean", std::vector<double>(bn.running_mean.data(), bn.running_mean.data() + bn.running_mean.size())},
                {"running_var", std::vector<double>(bn.running_var.data(), bn.running_var.data() + bn.running_var.size())}}}};
}

inline Checkpoint checkpoint_from_json(const json& j) {
  if (j.value("format", "") != "csl-checkpoint") throw ConfigError("not a checkpoint file");
  if (j.value("version", 0) != kCheckpointVersion)
    throw ConfigError("unsupported checkpoint version " + std::to_string(j.value("version", 0)));
  Checkpoint ck;
  ck.params.config = j.at("encoder").get<EncoderConfig>();
  for (const auto& s : j.at("shapelets")) {
    const auto rows = s.at("rows").get<Index>();
    const auto cols = s.at("cols").get<Index>();
    const auto data = s.at("data").get<std::vector<double>>();
    if (static_cast<Index>(data.size()) != rows * cols) throw ShapeError("shapelet data size does not match its shape");
    ck.params.shapelets.push_back(Eigen::Map<const Matrix>(data.data(), rows, cols));
  }
  ck.params.check();
  const auto& bn = j.at("batchnorm");
  const auto mean = bn.at("running_mean").get<std::vector<double>>();
  const auto var = bn.at("running_var").get<std::vector<double>>();
  if (static_cast<int>(mean.size()) != ck.params.config.d_repr || mean.size() != var.size())
    throw ShapeError("batchnorm statistics do not match the embedding width");
  ck.batchnorm.momentum = bn.at("momentum").get<double>();
  ck.batchnorm.epsilon = bn.at("epsilon").get<double>();
  ck.batchnorm.running_mean = Eigen::Map<const Vector>(mean.data(), static_cast<Index>(mean.size()));
  ck.batchnorm.running_var = Eigen::Map<const Vector>(var.data(), static_cast<Index>(var.size()));
  return ck;
}

// Writes to a sibling temporary file, then renames over the target.
inline void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << contents;
    if (!out.flush()) throw Error("failed writing " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

inline void save_checkpoint(const std::string& path, const ModelParams& params, const BatchNormState& bn) {
  write_file_atomic(path, checkpoint_to_json(params, bn).dump(1) + "\n");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path);
  try {
    return checkpoint_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace csl
