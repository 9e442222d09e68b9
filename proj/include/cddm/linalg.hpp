#ifndef CDDM_LINALG_HPP_
#define CDDM_LINALG_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "cddm/error.hpp"

namespace cddm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kEpsilon = std::numeric_limits<double>::epsilon();

// Relative rank tolerance: values below max(rows, cols) * eps * ||M|| count as
// zero.
inline double default_rank_tolerance(Eigen::Index rows, Eigen::Index cols) {
  return static_cast<double>(std::max<Eigen::Index>({rows, cols, 1})) * kEpsilon;
}

inline constexpr const char* kRankToleranceDescription = "max(rows,cols)*eps*norm";

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const char* what) {
  if (!m.allFinite()) throw NumericalError(std::string(what) + ": non-finite input");
}

// Moore-Penrose pseudoinverse via SVD. Singular values below
// tol * sigma_max are dropped; a negative tol selects the default.
inline Matrix pinv(const Matrix& m, double tol = -1.0) {
  require_finite(m, "pinv");
  if (m.size() == 0) return Matrix::Zero(m.cols(), m.rows());
  if (tol < 0.0) tol = default_rank_tolerance(m.rows(), m.cols());
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double cutoff = tol * (s.size() > 0 ? s[0] : 0.0);
  Vector inv = Vector::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > cutoff && s[i] > 0.0) inv[i] = 1.0 / s[i];
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// Minimum-norm least-squares solution of m * beta ~= y.
inline Vector lstsq(const Matrix& m, const Vector& y, double tol = -1.0) {
  if (m.rows() != y.size()) {
    throw ConfigError("lstsq: matrix has " + std::to_string(m.rows()) + " rows but rhs has " +
                      std::to_string(y.size()));
  }
  require_finite(m, "lstsq");
  require_finite(y, "lstsq");
  if (m.cols() == 0) return Vector();
  if (tol < 0.0) tol = default_rank_tolerance(m.rows(), m.cols());
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod;
  cod.setThreshold(tol);
  cod.compute(m);
  return cod.solve(y);
}

// Least-squares fit of a fixed target vector against a growing set of
// columns. H = Q R is kept with Q orthonormal (N x rank) and R upper
// trapezoidal (rank x cols). append() evaluates a column without touching the
// committed state; commit() or discard() consumes the returned candidate.
//
// A column whose component orthogonal to span(Q) falls below the rank
// tolerance adds no row to R; beta is then the minimum-norm solution of
// R beta = Q^T y, which equals the minimum-norm least-squares solution for H.
class IncrementalLeastSquares {
 public:
  class Candidate {
   public:
    Candidate(Candidate&&) noexcept = default;
    Candidate& operator=(Candidate&&) noexcept = default;
    Candidate(const Candidate&) = delete;
    Candidate& operator=(const Candidate&) = delete;

    double residual_norm() const { return residual_norm_; }
    double rmse() const { return residual_norm_ / std::sqrt(static_cast<double>(residual_.size())); }
    bool extends_rank() const { return extends_rank_; }
    bool consumed() const { return consumed_; }

    // Coefficients for the committed columns plus this one.
    Vector beta() const {
      if (consumed_) throw StateError("candidate already consumed");
      return owner_->solve_with(*this);
    }

   private:
    friend class IncrementalLeastSquares;
    Candidate() = default;

    const IncrementalLeastSquares* owner_ = nullptr;
    std::uint64_t generation_ = 0;
    Vector projection_;  // Q^T h
    Vector direction_;   // unit component of h orthogonal to Q (if extends_rank_)
    double pivot_ = 0.0;
    double target_coeff_ = 0.0;
    Vector residual_;
    double residual_norm_ = 0.0;
    double column_sq_norm_ = 0.0;
    bool extends_rank_ = false;
    bool consumed_ = false;
  };

  explicit IncrementalLeastSquares(Vector targets, Eigen::Index reserve_cols = 16)
      : residual_(std::move(targets)) {
    require_finite(residual_, "IncrementalLeastSquares");
    residual_norm_ = residual_.norm();
    reserve(reserve_cols);
  }

  Eigen::Index rows() const noexcept { return residual_.size(); }
  Eigen::Index cols() const noexcept { return cols_; }
  Eigen::Index rank() const noexcept { return rank_; }
  double residual_norm() const noexcept { return residual_norm_; }
  double rmse() const { return residual_norm_ / std::sqrt(static_cast<double>(rows())); }
  const Vector& residual() const noexcept { return residual_; }

  void reserve(Eigen::Index cap) {
    if (cap <= capacity_) return;
    q_.conservativeResize(rows(), cap);
    const Eigen::Index old = capacity_;
    r_.conservativeResize(cap, cap);
    // new rows of the existing columns are read once rank passes the old capacity
    r_.bottomRows(cap - old).setZero();
    r_.rightCols(cap - old).setZero();
    qty_.conservativeResize(cap);
    capacity_ = cap;
  }

  Candidate append(const Eigen::Ref<const Vector>& column) const {
    if (column.size() != rows()) {
      throw ConfigError("append: column has " + std::to_string(column.size()) + " entries, expected " +
                        std::to_string(rows()));
    }
    require_finite(column, "append");
    Candidate c;
    c.owner_ = this;
    c.generation_ = generation_;
    c.column_sq_norm_ = column.squaredNorm();

    // Classical Gram-Schmidt with one reorthogonalization pass.
    const auto basis = q_.leftCols(rank_);
    Vector v = column;
    c.projection_ = Vector::Zero(rank_);
    for (int pass = 0; pass < 2 && rank_ > 0; ++pass) {
      const Vector w = basis.transpose() * v;
      v.noalias() -= basis * w;
      c.projection_ += w;
    }
    const double pivot = v.norm();
    const double frob = std::sqrt(frob_sq_ + c.column_sq_norm_);
    const double tol = default_rank_tolerance(rows(), cols_ + 1) * frob;
    if (pivot > tol && pivot > 0.0) {
      c.extends_rank_ = true;
      c.pivot_ = pivot;
      c.direction_ = v / pivot;
      c.target_coeff_ = c.direction_.dot(residual_);
      c.residual_ = residual_ - c.target_coeff_ * c.direction_;
    } else {
      c.residual_ = residual_;
    }
    c.residual_norm_ = c.residual_.norm();
    return c;
  }

  void commit(Candidate& c) {
    check_handle(c);
    c.consumed_ = true;
    if (cols_ + 1 > capacity_) reserve(std::max<Eigen::Index>(2 * capacity_, 16));
    r_.col(cols_).setZero();
    r_.col(cols_).head(rank_) = c.projection_;
    if (c.extends_rank_) {
      q_.col(rank_) = c.direction_;
      r_(rank_, cols_) = c.pivot_;
      qty_[rank_] = c.target_coeff_;
      ++rank_;
    }
    ++cols_;
    frob_sq_ += c.column_sq_norm_;
    residual_ = std::move(c.residual_);
    residual_norm_ = c.residual_norm_;
    ++generation_;
  }

  void discard(Candidate& c) {
    check_handle(c);
    c.consumed_ = true;
    c.residual_.resize(0);
    c.direction_.resize(0);
  }

  // Minimum-norm least-squares coefficients for the committed columns.
  Vector beta() const {
    return solve(r_.topLeftCorner(rank_, cols_), qty_.head(rank_));
  }

 private:
  static Vector solve(const Matrix& r, const Vector& rhs) {
    if (r.cols() == 0) return Vector();
    if (r.rows() == r.cols()) {
      return r.triangularView<Eigen::Upper>().solve(rhs);
    }
    if (r.rows() == 0) return Vector::Zero(r.cols());
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(r);
    return cod.solve(rhs);
  }

  Vector solve_with(const Candidate& c) const {
    if (c.generation_ != generation_) throw StateError("stale candidate");
    const Eigen::Index new_rank = rank_ + (c.extends_rank_ ? 1 : 0);
    Matrix r = Matrix::Zero(new_rank, cols_ + 1);
    r.topLeftCorner(rank_, cols_) = r_.topLeftCorner(rank_, cols_);
    r.col(cols_).head(rank_) = c.projection_;
    Vector rhs(new_rank);
    rhs.head(rank_) = qty_.head(rank_);
    if (c.extends_rank_) {
      r(rank_, cols_) = c.pivot_;
      rhs[rank_] = c.target_coeff_;
    }
    return solve(r, rhs);
  }

  void check_handle(const Candidate& c) const {
    if (c.owner_ != this) throw StateError("candidate belongs to a different solver");
    if (c.consumed_) throw StateError("candidate already consumed");
    if (c.generation_ != generation_) throw StateError("stale candidate");
  }

  Matrix q_;
  Matrix r_;
  Vector qty_;
  Vector residual_;
  double residual_norm_ = 0.0;
  double frob_sq_ = 0.0;
  Eigen::Index rank_ = 0;
  Eigen::Index cols_ = 0;
  Eigen::Index capacity_ = 0;
  std::uint64_t generation_ = 0;
};

// Same interface as IncrementalLeastSquares, but every candidate recomputes
// beta = pinv([H h]) * y and the training residual from scratch.
class PinvLeastSquares {
 public:
  class Candidate {
   public:
    Candidate(Candidate&&) noexcept = default;
    Candidate& operator=(Candidate&&) noexcept = default;
    Candidate(const Candidate&) = delete;
    Candidate& operator=(const Candidate&) = delete;

    double residual_norm() const { return residual_norm_; }
    double rmse() const { return residual_norm_ / std::sqrt(static_cast<double>(rows_)); }
    bool consumed() const { return consumed_; }
    Vector beta() const {
      if (consumed_) throw StateError("candidate already consumed");
      return beta_;
    }

   private:
    friend class PinvLeastSquares;
    Candidate() = default;

    const PinvLeastSquares* owner_ = nullptr;
    std::uint64_t generation_ = 0;
    Matrix extended_;
    Vector beta_;
    double residual_norm_ = 0.0;
    Eigen::Index rows_ = 0;
    bool consumed_ = false;
  };

  explicit PinvLeastSquares(Vector targets, Eigen::Index /*reserve_cols*/ = 0)
      : targets_(std::move(targets)), h_(targets_.size(), 0) {
    require_finite(targets_, "PinvLeastSquares");
  }

  Eigen::Index rows() const noexcept { return targets_.size(); }
  Eigen::Index cols() const noexcept { return h_.cols(); }
  double residual_norm() const { return cols() == 0 ? targets_.norm() : residual_norm_; }
  double rmse() const { return residual_norm() / std::sqrt(static_cast<double>(rows())); }
  const Matrix& matrix() const noexcept { return h_; }

  Candidate append(const Eigen::Ref<const Vector>& column) const {
    if (column.size() != rows()) throw ConfigError("append: column length mismatch");
    require_finite(column, "append");
    Candidate c;
    c.owner_ = this;
    c.generation_ = generation_;
    c.rows_ = rows();
    c.extended_.resize(rows(), cols() + 1);
    c.extended_.leftCols(cols()) = h_;
    c.extended_.col(cols()) = column;
    c.beta_ = pinv(c.extended_) * targets_;
    const Vector fitted = c.extended_ * c.beta_;
    c.residual_norm_ = (fitted - targets_).norm();
    return c;
  }

  void commit(Candidate& c) {
    check_handle(c);
    c.consumed_ = true;
    h_ = std::move(c.extended_);
    beta_ = std::move(c.beta_);
    residual_norm_ = c.residual_norm_;
    ++generation_;
  }

  void discard(Candidate& c) {
    check_handle(c);
    c.consumed_ = true;
  }

  Vector beta() const { return beta_; }

 private:
  void check_handle(const Candidate& c) const {
    if (c.owner_ != this) throw StateError("candidate belongs to a different solver");
    if (c.consumed_) throw StateError("candidate already consumed");
    if (c.generation_ != generation_) throw StateError("stale candidate");
  }

  Vector targets_;
  Matrix h_;
  Vector beta_;
  double residual_norm_ = 0.0;
  std::uint64_t generation_ = 0;
};

}  // namespace cddm

#endif  // CDDM_LINALG_HPP_
