#pragma once

// Multivariate time-series containers, the UEA ".ts" and delimited text
// loaders, per-sample normalization and sliding-window segmentation.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <cctype>
#include <map>
#include <optional>
#include <random>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "csl/error.hpp"

namespace csl {

using Index = Eigen::Index;
// Rows are contiguous so a single dimension of a series is a flat array.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Flags = std::vector<std::uint8_t>;
using Rng = std::mt19937_64;

// A D x T sample: one row per variable, one column per timestamp.
struct Series {
  Matrix values;
  std::string id;

  Series() = default;
  explicit Series(Matrix v, std::string name = {}) : values(std::move(v)), id(std::move(name)) {}

  Index dims() const { return values.rows(); }
  Index length() const { return values.cols(); }
};

struct Dataset {
  std::vector<Series> samples;
  // Class index per sample, contiguous in 0..num_classes()-1.
  std::optional<std::vector<int>> labels;
  // Original label spelling for each class index.
  std::vector<std::string> class_names;
  // Per-timestamp anomaly flags, one sequence per sample.
  std::optional<std::vector<Flags>> point_labels;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  Index dims() const { return samples.empty() ? 0 : samples.front().dims(); }
  int num_classes() const { return static_cast<int>(class_names.size()); }

  Index min_length() const {
    Index t = 0;
    for (const auto& s : samples) t = (t == 0) ? s.length() : std::min(t, s.length());
    return t;
  }
  bool equal_length() const {
    return std::all_of(samples.begin(), samples.end(),
                       [&](const Series& s) { return s.length() == samples.front().length(); });
  }
};

struct WindowSet {
  std::vector<Series> windows;
  Flags labels;
  std::vector<Index> starts;  // zero-based start of each window in the source
  Index width = 0;
  Index stride = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t begin = 0;
  while (true) {
    const auto pos = s.find(sep, begin);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(begin));
      break;
    }
    out.push_back(s.substr(begin, pos - begin));
    begin = pos + 1;
  }
  return out;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t b = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline double parse_number(std::string_view tok, std::size_t line) {
  tok = trim(tok);
  if (tok.empty()) throw ParseError(line, "empty numeric field");
  if (tok == "?" || lower(tok) == "nan") throw ParseError(line, "missing value '" + std::string(tok) + "' is not supported");
  if (tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size())
    throw ParseError(line, "non-numeric token '" + std::string(tok) + "'");
  if (!std::isfinite(v)) throw ParseError(line, "non-finite value '" + std::string(tok) + "'");
  return v;
}

inline bool parse_bool(std::string_view tok, std::size_t line) {
  const auto t = lower(trim(tok));
  if (t == "true") return true;
  if (t == "false") return false;
  throw ParseError(line, "expected true/false, got '" + std::string(tok) + "'");
}

}  // namespace detail

// Parses the sktime/UEA ".ts" layout. Class labels are mapped to indices in
// the order the @classLabel header declares them.
inline Dataset parse_ts(std::istream& in) {
  Dataset ds;
  bool in_data = false;
  bool has_labels = false;
  std::optional<Index> declared_dims;
  std::map<std::string, int> class_index;
  std::optional<std::size_t> record_dims;
  std::vector<int> labels;

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;

    if (!in_data) {
      if (line.front() != '@') throw ParseError(line_no, "expected header line starting with '@' before @data");
      const auto tokens = detail::split_ws(line);
      const auto tag = detail::lower(tokens.front());
      if (tag == "@data") {
        if (tokens.size() != 1) throw ParseError(line_no, "malformed @data line");
        in_data = true;
      } else if (tag == "@classlabel") {
        if (tokens.size() < 2) throw ParseError(line_no, "@classLabel needs true/false");
        has_labels = detail::parse_bool(tokens[1], line_no);
        if (has_labels) {
          if (tokens.size() < 3) throw ParseError(line_no, "@classLabel true declares no labels");
          for (std::size_t i = 2; i < tokens.size(); ++i) {
            const std::string name(tokens[i]);
            if (class_index.count(name)) throw ParseError(line_no, "duplicate class label '" + name + "'");
            class_index[name] = static_cast<int>(ds.class_names.size());
            ds.class_names.push_back(name);
          }
        }
      } else if (tag == "@dimensions") {
        if (tokens.size() != 2) throw ParseError(line_no, "malformed @dimensions");
        const double d = detail::parse_number(tokens[1], line_no);
        if (d < 1 || d != std::floor(d)) throw ParseError(line_no, "@dimensions must be a positive integer");
        declared_dims = static_cast<Index>(d);
      } else if (tag == "@univariate") {
        if (tokens.size() != 2) throw ParseError(line_no, "malformed @univariate");
        if (detail::parse_bool(tokens[1], line_no)) declared_dims = declared_dims.value_or(1);
      } else if (tag == "@timestamps") {
        if (tokens.size() != 2) throw ParseError(line_no, "malformed @timeStamps");
        if (detail::parse_bool(tokens[1], line_no)) throw ParseError(line_no, "timestamped series are not supported");
      } else if (tag == "@problemname" || tag == "@missing" || tag == "@equallength" ||
                 tag == "@serieslength" || tag == "@targetlabel") {
        if (tokens.size() < 2) throw ParseError(line_no, "malformed " + std::string(tokens.front()));
      } else {
        throw ParseError(line_no, "unknown header " + std::string(tokens.front()));
      }
      continue;
    }

    auto fields = detail::split(line, ':');
    if (has_labels) {
      if (fields.size() < 2) throw ParseError(line_no, "record has no class label");
      const std::string name(detail::trim(fields.back()));
      const auto it = class_index.find(name);
      if (it == class_index.end()) throw ParseError(line_no, "undeclared class label '" + name + "'");
      labels.push_back(it->second);
      fields.pop_back();
    }
    if (record_dims && fields.size() != *record_dims)
      throw ParseError(line_no, "record has " + std::to_string(fields.size()) + " dimensions, expected " +
                                    std::to_string(*record_dims));
    if (declared_dims && static_cast<Index>(fields.size()) != *declared_dims)
      throw ParseError(line_no, "record has " + std::to_string(fields.size()) + " dimensions, header declares " +
                                    std::to_string(*declared_dims));
    record_dims = fields.size();

    std::vector<std::vector<double>> rows;
    for (const auto& f : fields) {
      std::vector<double> row;
      for (const auto& tok : detail::split(f, ',')) row.push_back(detail::parse_number(tok, line_no));
      if (!rows.empty() && row.size() != rows.front().size())
        throw ParseError(line_no, "dimensions of one record have different lengths");
      rows.push_back(std::move(row));
    }
    const auto t = static_cast<Index>(rows.front().size());
    if (t < 2) throw ParseError(line_no, "series must have at least 2 timestamps");
    Matrix m(static_cast<Index>(rows.size()), t);
    for (Index j = 0; j < m.rows(); ++j)
      for (Index k = 0; k < t; ++k) m(j, k) = rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
    ds.samples.emplace_back(std::move(m));
  }

  if (!in_data) throw ParseError(line_no, "missing @data section");
  if (ds.samples.empty()) throw ParseError(line_no, "empty data section");
  if (has_labels) ds.labels = std::move(labels);
  return ds;
}

inline Dataset load_ts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return parse_ts(in);
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    throw ParseError(path, e.line(), msg.substr(msg.find(": ") + 2));
  }
}

// One sample per line: D*T comma-separated values in row-major order (all of
// dimension 0, then dimension 1, ...), optionally followed by an integer label.
inline Dataset parse_delimited(std::istream& in, Index dims, bool has_label = false) {
  if (dims < 1) throw ConfigError("delimited input needs dims >= 1");
  Dataset ds;
  std::vector<long long> raw_labels;
  std::optional<std::size_t> width;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty()) continue;
    auto tokens = detail::split(line, ',');
    if (has_label) {
      if (tokens.size() < 2) throw ParseError(line_no, "line has no label column");
      const double lab = detail::parse_number(tokens.back(), line_no);
      if (lab != std::floor(lab)) throw ParseError(line_no, "label must be an integer");
      raw_labels.push_back(static_cast<long long>(lab));
      tokens.pop_back();
    }
    if (tokens.size() % static_cast<std::size_t>(dims) != 0)
      throw ParseError(line_no, std::to_string(tokens.size()) + " values are not divisible by D=" + std::to_string(dims));
    if (width && tokens.size() != *width)
      throw ParseError(line_no, "ragged line: " + std::to_string(tokens.size()) + " values, expected " +
                                    std::to_string(*width));
    width = tokens.size();
    const Index t = static_cast<Index>(tokens.size()) / dims;
    if (t < 2) throw ParseError(line_no, "series must have at least 2 timestamps");
    Matrix m(dims, t);
    for (Index j = 0; j < dims; ++j)
      for (Index k = 0; k < t; ++k) m(j, k) = detail::parse_number(tokens[static_cast<std::size_t>(j * t + k)], line_no);
    ds.samples.emplace_back(std::move(m));
  }
  if (ds.samples.empty()) throw ParseError(line_no, "no samples");
  if (has_label) {
    std::vector<long long> distinct = raw_labels;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<int> labels;
    labels.reserve(raw_labels.size());
    for (const auto l : raw_labels)
      labels.push_back(static_cast<int>(std::lower_bound(distinct.begin(), distinct.end(), l) - distinct.begin()));
    for (const auto l : distinct) ds.class_names.push_back(std::to_string(l));
    ds.labels = std::move(labels);
  }
  return ds;
}

inline void serialize_delimited(const Dataset& ds, std::ostream& out) {
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& v = ds.samples[i].values;
    bool first = true;
    for (Index j = 0; j < v.rows(); ++j)
      for (Index k = 0; k < v.cols(); ++k) {
        if (!first) out << ',';
        out << v(j, k);
        first = false;
      }
    if (ds.labels) out << ',' << (*ds.labels)[i];
    out << '\n';
  }
  out.precision(old_precision);
}

// Anomaly streams: one timestamp per line, D values then an optional 0/1 flag.
struct LabeledStream {
  Series series;
  Flags flags;  // empty when the file carries no flag column
};

inline LabeledStream parse_stream(std::istream& in, Index dims, bool has_flags = true) {
  if (dims < 1) throw ConfigError("stream input needs dims >= 1");
  std::vector<std::vector<double>> cols;
  Flags flags;
  std::string raw;
  std::size_t line_no = 0;
  const std::size_t expected = static_cast<std::size_t>(dims) + (has_flags ? 1 : 0);
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty()) continue;
    const auto tokens = detail::split(line, ',');
    if (tokens.size() != expected)
      throw ParseError(line_no, std::to_string(tokens.size()) + " fields, expected " + std::to_string(expected));
    std::vector<double> col;
    for (Index j = 0; j < dims; ++j) col.push_back(detail::parse_number(tokens[static_cast<std::size_t>(j)], line_no));
    if (has_flags) {
      const double f = detail::parse_number(tokens.back(), line_no);
      if (f != 0.0 && f != 1.0) throw ParseError(line_no, "anomaly flag must be 0 or 1");
      flags.push_back(static_cast<std::uint8_t>(f));
    }
    cols.push_back(std::move(col));
  }
  if (cols.size() < 2) throw ParseError(line_no, "stream must have at least 2 timestamps");
  Matrix m(dims, static_cast<Index>(cols.size()));
  for (Index t = 0; t < m.cols(); ++t)
    for (Index j = 0; j < dims; ++j) m(j, t) = cols[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)];
  return {Series(std::move(m)), std::move(flags)};
}

inline void serialize_stream(const LabeledStream& s, std::ostream& out) {
  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  const auto& v = s.series.values;
  for (Index t = 0; t < v.cols(); ++t) {
    for (Index j = 0; j < v.rows(); ++j) out << (j ? "," : "") << v(j, t);
    if (!s.flags.empty()) out << ',' << static_cast<int>(s.flags[static_cast<std::size_t>(t)]);
    out << '\n';
  }
  out.precision(old_precision);
}

// Per-dimension z-normalization with population standard deviation.
// Dimensions whose deviation is below 1e-8 become all zeros.
[[nodiscard]] inline Series znormalize(const Series& s) {
  Series out = s;
  for (Index j = 0; j < out.dims(); ++j) {
    auto row = out.values.row(j);
    const double mean = row.mean();
    const double var = (row.array() - mean).square().mean();
    const double sd = std::sqrt(var);
    if (sd < 1e-8)
      row.setZero();
    else
      row = (row.array() - mean) / sd;
  }
  return out;
}

[[nodiscard]] inline Dataset znormalize(const Dataset& ds) {
  Dataset out = ds;
  for (auto& s : out.samples) s = znormalize(s);
  return out;
}

// Truncates every sample (and its point flags) to the shortest length.
[[nodiscard]] inline Dataset equalize(const Dataset& ds) {
  Dataset out = ds;
  const Index t = ds.min_length();
  for (auto& s : out.samples) s.values = s.values.leftCols(t).eval();
  if (out.point_labels)
    for (auto& f : *out.point_labels) f.resize(static_cast<std::size_t>(t));
  return out;
}

inline void validate(const Dataset& ds) {
  if (ds.empty()) throw ShapeError("dataset is empty");
  const Index d = ds.dims();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples[i];
    if (s.dims() != d)
      throw ShapeError("sample " + std::to_string(i) + " has " + std::to_string(s.dims()) + " dimensions, expected " +
                       std::to_string(d));
    if (s.length() < 2) throw ShapeError("sample " + std::to_string(i) + " has fewer than 2 timestamps");
    if (!s.values.allFinite()) throw ShapeError("sample " + std::to_string(i) + " has non-finite values");
  }
  if (ds.labels) {
    if (ds.labels->size() != ds.size()) throw ShapeError("label count does not match sample count");
    for (const int l : *ds.labels)
      if (l < 0 || l >= ds.num_classes()) throw ShapeError("label index out of range");
  }
}

// Windows start at 0, stride, 2*stride, ...; a window is anomalous iff any
// timestamp it covers is flagged. Empty `flags` means all-normal.
inline WindowSet sliding_windows(const Series& s, const Flags& flags, Index width, Index stride) {
  if (width < 1 || stride < 1) throw ConfigError("window width and stride must be positive");
  if (width > s.length())
    throw ConfigError("window width " + std::to_string(width) + " exceeds series length " + std::to_string(s.length()));
  if (!flags.empty() && static_cast<Index>(flags.size()) != s.length())
    throw ShapeError("point flags do not match series length");

  // prefix[t] = number of flagged timestamps before t
  std::vector<Index> prefix(static_cast<std::size_t>(s.length()) + 1, 0);
  for (Index t = 0; t < s.length(); ++t)
    prefix[static_cast<std::size_t>(t) + 1] =
        prefix[static_cast<std::size_t>(t)] + (flags.empty() ? 0 : (flags[static_cast<std::size_t>(t)] ? 1 : 0));

  WindowSet ws;
  ws.width = width;
  ws.stride = stride;
  const Index count = (s.length() - width) / stride + 1;
  ws.windows.reserve(static_cast<std::size_t>(count));
  for (Index k = 0; k < count; ++k) {
    const Index start = k * stride;
    ws.windows.emplace_back(s.values.middleCols(start, width).eval());
    ws.starts.push_back(start);
    const auto hits = prefix[static_cast<std::size_t>(start + width)] - prefix[static_cast<std::size_t>(start)];
    ws.labels.push_back(hits > 0 ? 1 : 0);
  }
  return ws;
}

}  // namespace csl
