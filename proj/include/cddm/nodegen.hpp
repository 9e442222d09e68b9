#ifndef CDDM_NODEGEN_HPP_
#define CDDM_NODEGEN_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cddm/dataset.hpp"
#include "cddm/error.hpp"
#include "cddm/linalg.hpp"
#include "cddm/neighborhood.hpp"

namespace cddm {

// Largest double below 1 and smallest normal double: sigmoid outputs are
// kept strictly inside (0, 1).
inline constexpr double kSigmoidCeiling = 1.0 - 0x1.0p-53;
inline constexpr double kSigmoidFloor = std::numeric_limits<double>::min();

inline double logistic(double z) {
  double s;
  if (z >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-z));
  } else {
    const double e = std::exp(z);
    s = e / (1.0 + e);
  }
  return std::clamp(s, kSigmoidFloor, kSigmoidCeiling);
}

// y = slopes . x + intercept
struct Hyperplane {
  Vector slopes;
  double intercept = 0.0;

  double operator()(std::span<const double> x) const {
    double v = intercept;
    for (std::size_t j = 0; j < x.size(); ++j) v += slopes[static_cast<Eigen::Index>(j)] * x[j];
    return v;
  }
};

// Least-squares plane through the points (one per row of x). Inputs are
// centered first, so a rank-deficient neighborhood yields the minimum-norm
// slope vector and an intercept that passes through the centroid; coincident
// points give a flat plane at mean(y).
inline Hyperplane fit_hyperplane(const Matrix& x, const Vector& y) {
  if (x.rows() != y.size()) throw ConfigError("fit_hyperplane: point/target count mismatch");
  if (x.rows() < 2) throw ConfigError("fit_hyperplane: need at least 2 points");
  require_finite(x, "fit_hyperplane");
  require_finite(y, "fit_hyperplane");

  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Matrix xc = x.rowwise() - x_mean;
  const Vector yc = y.array() - y_mean;

  // Rank cutoff measured against the uncentered inputs: centering leaves
  // rounding noise that would otherwise look like real spread.
  const double xc_norm = xc.norm();
  Hyperplane plane;
  if (xc_norm <= default_rank_tolerance(x.rows(), x.cols()) * x.norm()) {
    plane.slopes = Vector::Zero(x.cols());
  } else {
    const double rel = default_rank_tolerance(x.rows(), x.cols()) * x.norm() / xc_norm;
    plane.slopes = lstsq(xc, yc, std::min(rel, 1.0));
  }
  plane.intercept = y_mean - x_mean.dot(plane.slopes);
  return plane;
}

inline Hyperplane fit_hyperplane(const Dataset& ds, std::span<const std::size_t> indices) {
  Matrix x(static_cast<Eigen::Index>(indices.size()), static_cast<Eigen::Index>(ds.dim()));
  Vector y(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto src = static_cast<Eigen::Index>(indices[r]);
    x.row(static_cast<Eigen::Index>(r)) = ds.inputs().row(src);
    y[static_cast<Eigen::Index>(r)] = ds.targets()[src];
  }
  return fit_hyperplane(x, y);
}

// One sigmoid hidden unit h(x) = 1 / (1 + exp(-(a.x + b))).
struct HiddenNode {
  Vector weights;
  double bias = 0.0;
  Vector anchor;  // inflection point; diagnostics only

  std::size_t dim() const noexcept { return static_cast<std::size_t>(weights.size()); }
};

// Fixed left-to-right summation so that scalar and batched evaluation agree
// bit for bit.
inline double pre_activation(const HiddenNode& node, std::span<const double> x) {
  double z = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) z += node.weights[static_cast<Eigen::Index>(j)] * x[j];
  return z + node.bias;
}

inline double sigmoid_response(const HiddenNode& node, std::span<const double> x) {
  if (x.size() != node.dim()) {
    throw ConfigError("sigmoid_response: input dimension " + std::to_string(x.size()) +
                      " does not match node dimension " + std::to_string(node.dim()));
  }
  return logistic(pre_activation(node, x));
}

inline double sigmoid_response(const HiddenNode& node, const Vector& x) {
  return sigmoid_response(node, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
}

// Tangency of the logistic at its inflection point to the plane gives
// a = 4 a'; the bias then puts the inflection point on the anchor.
inline HiddenNode make_node(const Hyperplane& plane, const Vector& anchor) {
  if (plane.slopes.size() != anchor.size()) throw ConfigError("make_node: dimension mismatch");
  HiddenNode node;
  node.weights = 4.0 * plane.slopes;
  node.anchor = anchor;
  double dot = 0.0;
  for (Eigen::Index j = 0; j < anchor.size(); ++j) dot += node.weights[j] * anchor[j];
  node.bias = -dot;
  return node;
}

// Builds the node anchored at a training sample from the plane fitted to the
// sample and its k nearest neighbors.
class NodeGenerator {
 public:
  NodeGenerator(Dataset train, std::size_t k) : index_(std::move(train)), k_(k) {
    const std::size_t n = index_.data().size();
    if (k_ < 1 || k_ >= n) {
      throw ConfigError("neighbor count k=" + std::to_string(k_) + " must satisfy 1 <= k <= N-1 (N=" +
                        std::to_string(n) + ")");
    }
  }

  const Dataset& data() const noexcept { return index_.data(); }
  std::size_t k() const noexcept { return k_; }

  HiddenNode generate(std::size_t anchor) const {
    const auto psi = index_.neighborhood(anchor, k_);
    const Hyperplane plane = fit_hyperplane(index_.data(), psi);
    return make_node(plane, index_.data().inputs().row(static_cast<Eigen::Index>(anchor)).transpose());
  }

 private:
  NeighborIndex index_;
  std::size_t k_;
};

}  // namespace cddm

#endif  // CDDM_NODEGEN_HPP_
