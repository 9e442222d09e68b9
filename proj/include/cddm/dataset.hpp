#ifndef CDDM_DATASET_HPP_
#define CDDM_DATASET_HPP_

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cddm/error.hpp"
#include "cddm/linalg.hpp"
#include "cddm/random.hpp"

namespace cddm {

// One sample per row so that a sample's inputs are contiguous.
using InputMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Sample {
  std::span<const double> x;
  double y;
};

// Immutable regression dataset. Copies share storage.
class Dataset {
 public:
  Dataset(std::string name, InputMatrix inputs, Vector targets) {
    if (inputs.rows() < 1) throw DataError("dataset '" + name + "' has no samples");
    if (inputs.cols() < 1) throw DataError("dataset '" + name + "' has no input dimensions");
    if (inputs.rows() != targets.size()) {
      throw DataError("dataset '" + name + "': " + std::to_string(inputs.rows()) +
                      " input rows but " + std::to_string(targets.size()) + " targets");
    }
    storage_ = std::make_shared<const Storage>(
        Storage{std::move(name), std::move(inputs), std::move(targets)});
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(storage_->targets.size()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(storage_->inputs.cols()); }
  const std::string& name() const noexcept { return storage_->name; }
  const InputMatrix& inputs() const noexcept { return storage_->inputs; }
  const Vector& targets() const noexcept { return storage_->targets; }

  std::span<const double> x(std::size_t l) const {
    return {storage_->inputs.data() + l * dim(), dim()};
  }

  Sample sample(std::size_t l) const { return {x(l), storage_->targets[static_cast<Eigen::Index>(l)]}; }

  Dataset subset(std::span<const std::size_t> indices, std::string name) const {
    InputMatrix in(static_cast<Eigen::Index>(indices.size()), inputs().cols());
    Vector out(static_cast<Eigen::Index>(indices.size()));
    for (std::size_t r = 0; r < indices.size(); ++r) {
      if (indices[r] >= size()) throw ConfigError("subset index out of range");
      const auto src = static_cast<Eigen::Index>(indices[r]);
      in.row(static_cast<Eigen::Index>(r)) = inputs().row(src);
      out[static_cast<Eigen::Index>(r)] = targets()[src];
    }
    return Dataset(std::move(name), std::move(in), std::move(out));
  }

  Dataset with_targets(Vector targets, std::string name) const {
    return Dataset(std::move(name), inputs(), std::move(targets));
  }

 private:
  struct Storage {
    std::string name;
    InputMatrix inputs;
    Vector targets;
  };
  std::shared_ptr<const Storage> storage_;
};

// Per-dimension min-max scaling onto [0, 1]. A degenerate dimension
// (max == min) maps to 0.
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(Vector input_min, Vector input_max, double target_min, double target_max)
      : input_min_(std::move(input_min)),
        input_max_(std::move(input_max)),
        target_min_(target_min),
        target_max_(target_max) {
    if (input_min_.size() != input_max_.size()) throw ConfigError("normalizer bound sizes differ");
    for (Eigen::Index j = 0; j < input_min_.size(); ++j) {
      if (!(input_max_[j] >= input_min_[j])) throw ConfigError("normalizer max < min");
    }
    if (!(target_max_ >= target_min_)) throw ConfigError("normalizer target max < min");
  }

  static Normalizer identity(std::size_t n) {
    return Normalizer(Vector::Zero(static_cast<Eigen::Index>(n)),
                      Vector::Ones(static_cast<Eigen::Index>(n)), 0.0, 1.0);
  }

  static Normalizer fit(const Dataset& ds) {
    return Normalizer(ds.inputs().colwise().minCoeff().transpose(),
                      ds.inputs().colwise().maxCoeff().transpose(), ds.targets().minCoeff(),
                      ds.targets().maxCoeff());
  }

  std::size_t dim() const noexcept { return static_cast<std::size_t>(input_min_.size()); }
  const Vector& input_min() const noexcept { return input_min_; }
  const Vector& input_max() const noexcept { return input_max_; }
  double target_min() const noexcept { return target_min_; }
  double target_max() const noexcept { return target_max_; }

  bool is_identity() const {
    return (input_min_.array() == 0.0).all() && (input_max_.array() == 1.0).all() &&
           target_min_ == 0.0 && target_max_ == 1.0;
  }

  double input(std::size_t j, double v) const {
    const auto jj = static_cast<Eigen::Index>(j);
    return scale(v, input_min_[jj], input_max_[jj]);
  }
  double invert_input(std::size_t j, double v) const {
    const auto jj = static_cast<Eigen::Index>(j);
    return unscale(v, input_min_[jj], input_max_[jj]);
  }
  double target(double v) const { return scale(v, target_min_, target_max_); }
  double invert_target(double v) const { return unscale(v, target_min_, target_max_); }

  // Test-split values may land outside [0, 1]; they are not clipped.
  Dataset apply(const Dataset& ds) const {
    check_dim(ds);
    InputMatrix in(ds.inputs().rows(), ds.inputs().cols());
    Vector out(ds.targets().size());
    for (Eigen::Index l = 0; l < in.rows(); ++l) {
      for (Eigen::Index j = 0; j < in.cols(); ++j) {
        in(l, j) = input(static_cast<std::size_t>(j), ds.inputs()(l, j));
      }
      out[l] = target(ds.targets()[l]);
    }
    return Dataset(ds.name(), std::move(in), std::move(out));
  }

  Dataset invert(const Dataset& ds) const {
    check_dim(ds);
    InputMatrix in(ds.inputs().rows(), ds.inputs().cols());
    Vector out(ds.targets().size());
    for (Eigen::Index l = 0; l < in.rows(); ++l) {
      for (Eigen::Index j = 0; j < in.cols(); ++j) {
        in(l, j) = invert_input(static_cast<std::size_t>(j), ds.inputs()(l, j));
      }
      out[l] = invert_target(ds.targets()[l]);
    }
    return Dataset(ds.name(), std::move(in), std::move(out));
  }

 private:
  static double scale(double v, double lo, double hi) {
    return hi > lo ? (v - lo) / (hi - lo) : 0.0;
  }
  static double unscale(double v, double lo, double hi) {
    return hi > lo ? lo + v * (hi - lo) : lo;
  }
  void check_dim(const Dataset& ds) const {
    if (ds.dim() != dim()) {
      throw ConfigError("normalizer dimension " + std::to_string(dim()) +
                        " does not match dataset dimension " + std::to_string(ds.dim()));
    }
  }

  Vector input_min_;
  Vector input_max_;
  double target_min_ = 0.0;
  double target_max_ = 1.0;
};

// ---------------------------------------------------------------------------
// Synthetic target functions

// Three Gaussian bumps on [0, 1]; the two narrow ones make the function hard
// for sigmoids drawn from a fixed interval.
inline double tf1(double x) {
  const double a = 10.0 * x - 4.0;
  const double b = 80.0 * x - 40.0;
  const double c = 80.0 * x - 20.0;
  return 0.2 * std::exp(-a * a) + 0.5 * std::exp(-b * b) + 0.3 * std::exp(-c * c);
}

inline double tf2(double x1, double x2) {
  return std::sin(20.0 * std::exp(x1)) * x1 * x1 + std::sin(20.0 * std::exp(x2)) * x2 * x2;
}

// Training inputs i.i.d. U[0,1]; test inputs on a regular grid including both
// endpoints. Targets are noise-free.
inline std::pair<Dataset, Dataset> generate_tf1(std::size_t n_train, std::size_t n_test,
                                                std::uint64_t seed) {
  if (n_train < 1 || n_test < 1) throw ConfigError("generate_tf1: set sizes must be >= 1");
  Rng rng(seed);
  InputMatrix xtr(static_cast<Eigen::Index>(n_train), 1);
  Vector ytr(static_cast<Eigen::Index>(n_train));
  for (Eigen::Index l = 0; l < xtr.rows(); ++l) {
    xtr(l, 0) = rng.uniform();
    ytr[l] = tf1(xtr(l, 0));
  }
  InputMatrix xte(static_cast<Eigen::Index>(n_test), 1);
  Vector yte(static_cast<Eigen::Index>(n_test));
  for (Eigen::Index l = 0; l < xte.rows(); ++l) {
    xte(l, 0) = n_test == 1 ? 0.0 : static_cast<double>(l) / static_cast<double>(n_test - 1);
    yte[l] = tf1(xte(l, 0));
  }
  return {Dataset("tf1-train", std::move(xtr), std::move(ytr)),
          Dataset("tf1-test", std::move(xte), std::move(yte))};
}

// Both sets drawn uniformly on [0,1]^2. Clean targets are min-max scaled with
// the range of train and test together, then uniform noise on
// [-noise_halfwidth, noise_halfwidth] is added to both sets.
inline std::pair<Dataset, Dataset> generate_tf2(std::size_t n_train, std::size_t n_test,
                                                double noise_halfwidth, std::uint64_t seed) {
  if (n_train < 1 || n_test < 1) throw ConfigError("generate_tf2: set sizes must be >= 1");
  if (!(noise_halfwidth >= 0.0)) throw ConfigError("generate_tf2: noise half-width must be >= 0");
  Rng rng(seed);
  auto draw = [&rng](std::size_t count, InputMatrix& x, Vector& y) {
    x.resize(static_cast<Eigen::Index>(count), 2);
    y.resize(static_cast<Eigen::Index>(count));
    for (Eigen::Index l = 0; l < x.rows(); ++l) {
      x(l, 0) = rng.uniform();
      x(l, 1) = rng.uniform();
      y[l] = tf2(x(l, 0), x(l, 1));
    }
  };
  InputMatrix xtr, xte;
  Vector ytr, yte;
  draw(n_train, xtr, ytr);
  draw(n_test, xte, yte);

  const double lo = std::min(ytr.minCoeff(), yte.minCoeff());
  const double hi = std::max(ytr.maxCoeff(), yte.maxCoeff());
  auto finish = [&](Vector& y) {
    for (Eigen::Index l = 0; l < y.size(); ++l) {
      y[l] = hi > lo ? (y[l] - lo) / (hi - lo) : 0.0;
      if (noise_halfwidth > 0.0) y[l] += rng.uniform(-noise_halfwidth, noise_halfwidth);
    }
  };
  finish(ytr);
  finish(yte);
  return {Dataset("tf2-train", std::move(xtr), std::move(ytr)),
          Dataset("tf2-test", std::move(xte), std::move(yte))};
}

// Random disjoint partition; the train side gets round-half-up(fraction * N)
// samples. Both sides keep the original sample order.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction,
                                         std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("split: train fraction must lie in (0, 1)");
  }
  const std::size_t n = ds.size();
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 0.5));
  if (n_train == 0 || n_train >= n) {
    throw ConfigError("split of " + std::to_string(n) + " samples at fraction " +
                      std::to_string(train_fraction) + " leaves one side empty");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::swap(perm[i], perm[rng.index(i + 1)]);
  }
  std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {ds.subset(train, ds.name() + "-train"), ds.subset(test, ds.name() + "-test")};
}

// ---------------------------------------------------------------------------
// Text formats

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split_list(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// First whitespace-delimited token and the remainder.
inline std::pair<std::string_view, std::string_view> head_token(std::string_view s) {
  s = trim(s);
  const auto pos = s.find_first_of(" \t");
  if (pos == std::string_view::npos) return {s, {}};
  return {s.substr(0, pos), trim(s.substr(pos))};
}

}  // namespace detail

// Reads a KEEL .dat file: '@' header lines, then comma-separated numeric rows.
// The output column is the @outputs attribute (or the last attribute when no
// @outputs line is present); the inputs keep @attribute order. Values are
// returned un-normalized.
inline Dataset parse_keel(std::istream& in, const std::string& source) {
  struct Attribute {
    std::string name;
    std::size_t line;
  };
  std::string relation = source;
  std::vector<Attribute> attributes;
  std::vector<std::string> outputs;
  std::vector<std::string> inputs;
  std::vector<std::vector<double>> rows;
  bool in_data = false;

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty() || line.front() == '%') continue;

    if (!in_data) {
      if (line.front() != '@') throw ParseError(source, line_no, "expected a header line starting with '@'");
      const auto [keyword, rest] = detail::head_token(line);
      const auto key = detail::lower(keyword);
      if (key == "@relation") {
        if (rest.empty()) throw ParseError(source, line_no, "@relation without a name");
        relation = std::string(rest);
      } else if (key == "@attribute") {
        const auto [name, type] = detail::head_token(rest);
        if (name.empty() || type.empty()) throw ParseError(source, line_no, "malformed @attribute line");
        if (type.front() == '{') {
          throw ParseError(source, line_no, "nominal attribute '" + std::string(name) + "' is not supported");
        }
        const auto type_name = detail::lower(detail::head_token(type.substr(0, type.find('['))).first);
        if (type_name != "real" && type_name != "integer" && type_name != "numeric") {
          throw ParseError(source, line_no, "unsupported attribute type '" + std::string(type) + "'");
        }
        attributes.push_back({std::string(name), line_no});
      } else if (key == "@inputs" || key == "@input") {
        for (auto n : detail::split_list(rest, ',')) inputs.emplace_back(n);
      } else if (key == "@outputs" || key == "@output") {
        for (auto n : detail::split_list(rest, ',')) outputs.emplace_back(n);
      } else if (key == "@data") {
        in_data = true;
      } else {
        throw ParseError(source, line_no, "unknown header directive '" + std::string(keyword) + "'");
      }
      continue;
    }

    const auto cells = detail::split_list(line, ',');
    if (cells.size() != attributes.size()) {
      throw ParseError(source, line_no,
                       "row " + std::to_string(rows.size() + 1) + " has " + std::to_string(cells.size()) +
                           " values, expected " + std::to_string(attributes.size()));
    }
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = detail::parse_double(cells[c]);
      if (!v || !std::isfinite(*v)) {
        throw ParseError(source, line_no,
                         "row " + std::to_string(rows.size() + 1) + ", column " + std::to_string(c + 1) +
                             ": non-numeric value '" + std::string(cells[c]) + "'");
      }
      row[c] = *v;
    }
    rows.push_back(std::move(row));
  }

  if (!in_data) throw ParseError(source, line_no, "missing @data section");
  if (attributes.size() < 2) throw ParseError(source, line_no, "need at least one input and one output attribute");
  if (rows.empty()) throw DataError(source + ": empty data section");

  auto find_attr = [&](const std::string& name) -> std::size_t {
    for (std::size_t a = 0; a < attributes.size(); ++a) {
      if (attributes[a].name == name) return a;
    }
    throw ParseError(source, 0, "unknown attribute '" + name + "' in @inputs/@outputs");
  };
  if (outputs.size() > 1) throw DataError(source + ": multi-output data is not supported");
  const std::size_t out_col = outputs.empty() ? attributes.size() - 1 : find_attr(outputs.front());
  for (const auto& n : inputs) {
    if (find_attr(n) == out_col) throw DataError(source + ": attribute '" + n + "' is both input and output");
  }

  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  InputMatrix x(n_rows, static_cast<Eigen::Index>(attributes.size() - 1));
  Vector y(n_rows);
  for (Eigen::Index r = 0; r < n_rows; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    Eigen::Index j = 0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == out_col) {
        y[r] = row[c];
      } else {
        x(r, j++) = row[c];
      }
    }
  }
  return Dataset(relation, std::move(x), std::move(y));
}

inline Dataset load_keel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file '" + path + "'");
  return parse_keel(in, path);
}

// CSV with header x1,...,xn,y and 17 significant digits.
inline void write_csv(const Dataset& ds, std::ostream& out) {
  for (std::size_t j = 0; j < ds.dim(); ++j) out << 'x' << (j + 1) << ',';
  out << "y\n";
  out << std::setprecision(17);
  for (std::size_t l = 0; l < ds.size(); ++l) {
    for (double v : ds.x(l)) out << v << ',';
    out << ds.targets()[static_cast<Eigen::Index>(l)] << '\n';
  }
}

struct CsvTable {
  InputMatrix x;
  std::optional<Vector> y;
};

// Reads CSV written by write_csv. The y column is optional; input columns are
// every column named x<j> in header order.
inline CsvTable read_csv(std::istream& in, const std::string& source) {
  std::string raw;
  std::size_t line_no = 0;
  std::vector<std::string_view> header;
  std::string header_line;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!detail::trim(raw).empty()) {
      header_line = raw;
      break;
    }
  }
  if (header_line.empty()) throw ParseError(source, line_no, "missing CSV header");
  header = detail::split_list(detail::trim(header_line), ',');
  std::optional<std::size_t> y_col;
  std::size_t n_inputs = 0;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "y") {
      if (y_col) throw ParseError(source, line_no, "duplicate y column");
      y_col = c;
    } else if (header[c].size() > 1 && header[c].front() == 'x') {
      ++n_inputs;
    } else {
      throw ParseError(source, line_no, "unexpected column '" + std::string(header[c]) + "'");
    }
  }
  if (n_inputs == 0) throw ParseError(source, line_no, "no input columns");

  std::vector<std::vector<double>> rows;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty()) continue;
    const auto cells = detail::split_list(line, ',');
    if (cells.size() != header.size()) throw ParseError(source, line_no, "wrong number of columns");
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = detail::parse_double(cells[c]);
      if (!v) {
        throw ParseError(source, line_no, "column " + std::to_string(c + 1) + ": non-numeric value '" +
                                              std::string(cells[c]) + "'");
      }
      row[c] = *v;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(source + ": no data rows");

  CsvTable table;
  table.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n_inputs));
  if (y_col) table.y = Vector(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    Eigen::Index j = 0;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (y_col && c == *y_col) {
        (*table.y)[static_cast<Eigen::Index>(r)] = rows[r][c];
      } else {
        table.x(static_cast<Eigen::Index>(r), j++) = rows[r][c];
      }
    }
  }
  return table;
}

}  // namespace cddm

#endif  // CDDM_DATASET_HPP_
