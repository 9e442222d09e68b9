#ifndef CDDM_NETWORK_HPP_
#define CDDM_NETWORK_HPP_

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cddm/dataset.hpp"
#include "cddm/error.hpp"
#include "cddm/linalg.hpp"
#include "cddm/nodegen.hpp"

namespace cddm {

inline constexpr int kModelSchemaVersion = 1;

// Single-hidden-layer network: sum_j beta_j * h_j(x). Inputs and outputs are
// in the normalizer's [0, 1] space.
struct NetworkModel {
  std::vector<HiddenNode> nodes;
  Vector beta;
  Normalizer normalizer;
  std::map<std::string, std::string> metadata;

  std::size_t size() const noexcept { return nodes.size(); }
  std::size_t dim() const noexcept { return normalizer.dim(); }
};

inline Vector hidden_column(const HiddenNode& node, const InputMatrix& x) {
  if (static_cast<std::size_t>(x.cols()) != node.dim()) {
    throw ConfigError("hidden_column: node dimension " + std::to_string(node.dim()) +
                      " does not match input dimension " + std::to_string(x.cols()));
  }
  const auto n = static_cast<std::size_t>(x.cols());
  Vector col(x.rows());
  for (Eigen::Index l = 0; l < x.rows(); ++l) {
    col[l] = logistic(pre_activation(node, {x.data() + static_cast<std::size_t>(l) * n, n}));
  }
  return col;
}

// N x m matrix of node responses, entry (l, j) = h_j(x_l).
inline Matrix hidden_outputs(std::span<const HiddenNode> nodes, const InputMatrix& x) {
  Matrix h(x.rows(), static_cast<Eigen::Index>(nodes.size()));
  for (std::size_t j = 0; j < nodes.size(); ++j) h.col(static_cast<Eigen::Index>(j)) = hidden_column(nodes[j], x);
  return h;
}

inline Matrix hidden_outputs(std::span<const HiddenNode> nodes, const Dataset& ds) {
  return hidden_outputs(nodes, ds.inputs());
}

inline double predict(const NetworkModel& model, std::span<const double> x) {
  if (x.size() != model.dim()) {
    throw ConfigError("predict: input dimension " + std::to_string(x.size()) + ", model expects " +
                      std::to_string(model.dim()));
  }
  double y = 0.0;
  for (std::size_t j = 0; j < model.nodes.size(); ++j) {
    y += model.beta[static_cast<Eigen::Index>(j)] * sigmoid_response(model.nodes[j], x);
  }
  return y;
}

inline Vector predict(const NetworkModel& model, const InputMatrix& x) {
  if (static_cast<std::size_t>(x.cols()) != model.dim()) {
    throw ConfigError("predict: input dimension " + std::to_string(x.cols()) + ", model expects " +
                      std::to_string(model.dim()));
  }
  const auto n = static_cast<std::size_t>(x.cols());
  Vector y(x.rows());
  for (Eigen::Index l = 0; l < x.rows(); ++l) {
    y[l] = predict(model, std::span<const double>(x.data() + static_cast<std::size_t>(l) * n, n));
  }
  return y;
}

inline double rmse(const Vector& predictions, const Vector& targets) {
  if (predictions.size() != targets.size()) {
    throw ConfigError("rmse: " + std::to_string(predictions.size()) + " predictions vs " +
                      std::to_string(targets.size()) + " targets");
  }
  if (predictions.size() == 0) throw ConfigError("rmse: empty input");
  return std::sqrt((predictions - targets).squaredNorm() / static_cast<double>(targets.size()));
}

inline double rmse(const NetworkModel& model, const Dataset& ds) {
  return rmse(predict(model, ds.inputs()), ds.targets());
}

// ---------------------------------------------------------------------------
// Model file
//
//   cddm-model
//   schema_version 1
//   input_dim <n>
//   node_count <m>
//   meta <key> <value>            (zero or more)
//   input_min <n values>
//   input_max <n values>
//   target_range <min> <max>
//   node <bias> <n weights> <n anchor coordinates>    (m lines)
//   beta <m values>
//   end
//
// Reals are written with 17 significant digits, which round-trips exactly.

namespace detail {

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class ModelReader {
 public:
  ModelReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  // Next non-empty line split into its keyword and value tokens.
  std::vector<std::string> line(const char* expected) {
    std::string raw;
    while (std::getline(in_, raw)) {
      ++line_no_;
      std::istringstream ss(raw);
      std::vector<std::string> tokens;
      for (std::string t; ss >> t;) tokens.push_back(std::move(t));
      if (tokens.empty()) continue;
      return tokens;
    }
    throw ModelTruncatedError(source_ + ": file ends before '" + expected + "'");
  }

  std::vector<std::string> expect(const char* keyword, std::size_t values) {
    auto tokens = line(keyword);
    if (tokens.front() != keyword) {
      throw ModelFileError(where() + "expected '" + keyword + "', found '" + tokens.front() + "'");
    }
    if (tokens.size() - 1 < values) {
      throw ModelTruncatedError(where() + "'" + keyword + "' has " + std::to_string(tokens.size() - 1) +
                                " values, expected " + std::to_string(values));
    }
    if (tokens.size() - 1 > values) throw ModelFileError(where() + "too many values on '" + keyword + "' line");
    return tokens;
  }

  double real(const std::string& token) {
    const auto v = parse_double(token);
    if (!v) throw ModelFileError(where() + "not a number: '" + token + "'");
    if (!std::isfinite(*v)) throw ModelNonFiniteError(where() + "non-finite value '" + token + "'");
    return *v;
  }

  std::size_t count(const std::string& token) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
      throw ModelFileError(where() + "not a count: '" + token + "'");
    }
    return v;
  }

  std::string where() const { return source_ + ":" + std::to_string(line_no_) + ": "; }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_no_ = 0;
};

}  // namespace detail

inline void save_model(const NetworkModel& model, std::ostream& out) {
  using detail::format_real;
  if (static_cast<std::size_t>(model.beta.size()) != model.nodes.size()) {
    throw ConfigError("save_model: beta length does not match node count");
  }
  if (!model.beta.allFinite()) throw NumericalError("save_model: non-finite output weight");
  out << "cddm-model\n";
  out << "schema_version " << kModelSchemaVersion << '\n';
  out << "input_dim " << model.dim() << '\n';
  out << "node_count " << model.nodes.size() << '\n';
  for (const auto& [key, value] : model.metadata) {
    if (key.find_first_of(" \t\n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw ConfigError("save_model: metadata key/value contains whitespace/newline: '" + key + "'");
    }
    out << "meta " << key << ' ' << (value.empty() ? "-" : value) << '\n';
  }
  out << "input_min";
  for (double v : model.normalizer.input_min()) out << ' ' << format_real(v);
  out << "\ninput_max";
  for (double v : model.normalizer.input_max()) out << ' ' << format_real(v);
  out << "\ntarget_range " << format_real(model.normalizer.target_min()) << ' '
      << format_real(model.normalizer.target_max()) << '\n';
  for (const auto& node : model.nodes) {
    if (node.dim() != model.dim()) throw ConfigError("save_model: node dimension mismatch");
    out << "node " << format_real(node.bias);
    for (double v : node.weights) out << ' ' << format_real(v);
    const Vector anchor = node.anchor.size() == node.weights.size() ? node.anchor : Vector::Zero(node.weights.size());
    for (double v : anchor) out << ' ' << format_real(v);
    out << '\n';
  }
  out << "beta";
  for (double v : model.beta) out << ' ' << format_real(v);
  out << "\nend\n";
}

inline void save_model(const NetworkModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file '" + path + "'");
  save_model(model, out);
  if (!out) throw DataError("error writing model file '" + path + "'");
}

inline NetworkModel load_model(std::istream& in, const std::string& source) {
  detail::ModelReader rd(in, source);
  auto magic = rd.line("cddm-model");
  if (magic.size() != 1 || magic.front() != "cddm-model") {
    throw ModelFileError(rd.where() + "not a cddm model file");
  }
  const auto version = rd.expect("schema_version", 1);
  if (version[1] != std::to_string(kModelSchemaVersion)) {
    throw ModelVersionError(rd.where() + "unsupported schema_version " + version[1] + " (expected " +
                            std::to_string(kModelSchemaVersion) + ")");
  }
  const std::size_t n = rd.count(rd.expect("input_dim", 1)[1]);
  const std::size_t m = rd.count(rd.expect("node_count", 1)[1]);
  if (n == 0) throw ModelFileError(rd.where() + "input_dim must be positive");

  NetworkModel model;
  auto tokens = rd.line("input_min");
  while (tokens.front() == "meta") {
    if (tokens.size() < 3) throw ModelFileError(rd.where() + "malformed meta line");
    std::string value = tokens[2];
    for (std::size_t t = 3; t < tokens.size(); ++t) value += ' ' + tokens[t];
    model.metadata[tokens[1]] = value == "-" ? "" : value;
    tokens = rd.line("input_min");
  }
  auto read_vector = [&](const std::vector<std::string>& tk, const char* key, std::size_t count) {
    if (tk.front() != key) throw ModelFileError(rd.where() + "expected '" + key + "', found '" + tk.front() + "'");
    if (tk.size() - 1 != count) {
      throw ModelTruncatedError(rd.where() + "'" + key + "' has " + std::to_string(tk.size() - 1) +
                                " values, expected " + std::to_string(count));
    }
    Vector v(static_cast<Eigen::Index>(count));
    for (std::size_t i = 0; i < count; ++i) v[static_cast<Eigen::Index>(i)] = rd.real(tk[i + 1]);
    return v;
  };
  Vector in_min = read_vector(tokens, "input_min", n);
  Vector in_max = read_vector(rd.line("input_max"), "input_max", n);
  const Vector range = read_vector(rd.line("target_range"), "target_range", 2);
  try {
    model.normalizer = Normalizer(std::move(in_min), std::move(in_max), range[0], range[1]);
  } catch (const ConfigError& e) {
    throw ModelFileError(rd.where() + e.what());
  }

  model.nodes.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    const Vector v = read_vector(rd.line("node"), "node", 1 + 2 * n);
    HiddenNode node;
    node.bias = v[0];
    node.weights = v.segment(1, static_cast<Eigen::Index>(n));
    node.anchor = v.segment(1 + static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    model.nodes.push_back(std::move(node));
  }
  model.beta = read_vector(rd.line("beta"), "beta", m);
  const auto end = rd.line("end");
  if (end.size() != 1 || end.front() != "end") throw ModelFileError(rd.where() + "expected 'end'");
  return model;
}

inline NetworkModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  return load_model(in, path);
}

}  // namespace cddm

#endif  // CDDM_NETWORK_HPP_
