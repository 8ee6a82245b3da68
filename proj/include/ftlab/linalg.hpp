#pragma once

// Dense linear-algebra substrate shared by every model module: symmetric
// eigendecomposition, row-space projectors, covariance estimation and a
// scalar bracketing root finder.

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "ftlab/error.hpp"

namespace ftlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw invalid_argument(std::string(what) + ": contains NaN or Inf");
}

inline void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw invalid_argument(std::string(what) + ": contains NaN or Inf");
}

inline void require_same_size(const Vector& a, const Vector& b, const char* what) {
  if (a.size() != b.size()) {
    std::ostringstream os;
    os << what << ": dimension mismatch (" << a.size() << " vs " << b.size() << ")";
    throw dimension_mismatch(os.str());
  }
}

/// Eigenpairs of a symmetric matrix, eigenvalues sorted in descending order.
/// Column i of V is the eigenvector of lambda(i).
struct EigenDecomp {
  Matrix V;
  Vector lambda;

  Eigen::Index dim() const { return lambda.size(); }

  /// First k eigenvectors (the "top-k span").
  Matrix top(Eigen::Index k) const { return V.leftCols(k); }
  /// Remaining d - k eigenvectors.
  Matrix bottom(Eigen::Index k) const { return V.rightCols(dim() - k); }

  Matrix reconstruct() const { return V * lambda.asDiagonal() * V.transpose(); }

  /// v^T M v evaluated in the eigenbasis; for a covariance this is
  /// ||M^{1/2} v||^2.
  double quadratic_form(const Vector& v) const {
    const Vector c = V.transpose() * v;
    return (lambda.array() * c.array().square()).sum();
  }
};

namespace detail {

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline EigenDecomp sorted_descending(const Eigen::SelfAdjointEigenSolver<Matrix>& solver) {
  const Eigen::Index d = solver.eigenvalues().size();
  EigenDecomp out;
  out.V.resize(d, d);
  out.lambda.resize(d);
  // Eigen returns ascending order.
  for (Eigen::Index i = 0; i < d; ++i) {
    out.lambda(i) = solver.eigenvalues()(d - 1 - i);
    out.V.col(i) = solver.eigenvectors().col(d - 1 - i);
  }
  return out;
}

}  // namespace detail

inline EigenDecomp eig_sym(const Matrix& m) {
  if (m.rows() != m.cols()) throw invalid_argument("eig_sym: matrix is not square");
  require_finite(m, "eig_sym");
  const double scale = std::max(1.0, detail::max_abs(m));
  if (detail::max_abs(m - m.transpose()) > 1e-9 * scale) {
    throw invalid_argument("eig_sym: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success) {
    throw non_convergence_error("eig_sym: eigendecomposition did not converge");
  }
  return detail::sorted_descending(solver);
}

/// Eigendecomposition of a covariance matrix. Small negative eigenvalues from
/// rounding are clamped to zero; anything below -1e-9 (relative to the
/// largest eigenvalue) means the input is not PSD.
inline EigenDecomp eig_covariance(const Matrix& cov) {
  EigenDecomp e = eig_sym(cov);
  const double tol = 1e-9 * std::max(1.0, std::abs(e.lambda.size() ? e.lambda(0) : 0.0));
  for (Eigen::Index i = 0; i < e.lambda.size(); ++i) {
    if (e.lambda(i) < -tol) {
      std::ostringstream os;
      os << "eig_covariance: eigenvalue " << e.lambda(i) << " is negative; matrix is not PSD";
      throw invalid_argument(os.str());
    }
    e.lambda(i) = std::max(0.0, e.lambda(i));
  }
  return e;
}

/// Largest absolute eigenvalue of a symmetric matrix, i.e. its spectral norm.
inline double spectral_norm_sym(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw non_convergence_error("spectral_norm_sym: eigensolver did not converge");
  }
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

inline double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

/// Orthogonal projectors onto the row space of a data matrix X (P_par) and
/// onto its orthogonal complement (P_perp). Stored as an orthonormal basis of
/// the row space; the dense d x d projectors are only formed on request.
class ProjectorPair {
 public:
  ProjectorPair() = default;
  explicit ProjectorPair(Matrix basis) : basis_(std::move(basis)) {}

  const Matrix& basis() const { return basis_; }
  Eigen::Index rank() const { return basis_.cols(); }
  Eigen::Index dim() const { return basis_.rows(); }

  Vector parallel(const Vector& v) const {
    require_same_size(v, Vector::Zero(dim()), "ProjectorPair::parallel");
    return basis_ * (basis_.transpose() * v);
  }
  Vector perp(const Vector& v) const { return v - parallel(v); }

  Matrix parallel(const Matrix& m) const { return basis_ * (basis_.transpose() * m); }
  Matrix perp(const Matrix& m) const { return m - parallel(m); }

  Matrix parallel_matrix() const { return basis_ * basis_.transpose(); }
  Matrix perp_matrix() const { return Matrix::Identity(dim(), dim()) - parallel_matrix(); }

 private:
  Matrix basis_;
};

/// Relative singular-value cutoff used for rank detection.
inline constexpr double kRankThreshold = 1e-10;

inline ProjectorPair projectors_from_rows(const Matrix& x) {
  if (x.rows() == 0 || x.cols() == 0) throw invalid_argument("projectors_from_rows: empty matrix");
  require_finite(x, "projectors_from_rows");
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n > d) {
    std::ostringstream os;
    os << "projectors_from_rows: " << n << " rows in dimension " << d
       << " cannot be linearly independent";
    throw rank_deficient_error(os.str());
  }
  Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  const double cutoff = kRankThreshold * sigma(0);
  Eigen::Index rank = 0;
  while (rank < sigma.size() && sigma(rank) > cutoff && sigma(rank) > 0.0) ++rank;
  if (rank < n) {
    std::ostringstream os;
    os << "projectors_from_rows: rows are linearly dependent (rank " << rank << " < " << n
       << ")";
    throw rank_deficient_error(os.str());
  }
  return ProjectorPair{svd.matrixV().leftCols(rank)};
}

/// (P_{<=k}, P_{>k}): projectors onto the span of the top-k eigenvectors and
/// onto the span of the remaining d - k.
inline std::pair<Matrix, Matrix> top_bottom_projectors(const EigenDecomp& e, Eigen::Index k) {
  const Eigen::Index d = e.dim();
  if (k < 0 || k > d) {
    std::ostringstream os;
    os << "top_bottom_projectors: k = " << k << " outside [0, " << d << "]";
    throw invalid_argument(os.str());
  }
  const Matrix top = e.top(k);
  const Matrix bottom = e.bottom(k);
  return {top * top.transpose(), bottom * bottom.transpose()};
}

/// (1/n) X^T X.
inline Matrix empirical_covariance(const Matrix& x) {
  if (x.rows() == 0) throw invalid_argument("empirical_covariance: no samples");
  require_finite(x, "empirical_covariance");
  Matrix cov = Matrix::Zero(x.cols(), x.cols());
  cov.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose(), 1.0 / static_cast<double>(x.rows()));
  return cov.selfadjointView<Eigen::Lower>();
}

inline constexpr int kBisectionMaxIters = 200;

/// Bisection on a bracket with a sign change. Stops once |f(r)| <= tol or the
/// bracket is narrower than tol.
inline double find_positive_root(const std::function<double(double)>& f, double lo, double hi,
                                 double tol) {
  if (!(lo <= hi)) throw invalid_argument("find_positive_root: lo must not exceed hi");
  double f_lo = f(lo);
  double f_hi = f(hi);
  if (!std::isfinite(f_lo) || !std::isfinite(f_hi)) {
    throw no_root_error("find_positive_root: non-finite value at bracket end");
  }
  if (f_lo == 0.0) return lo;
  if (f_hi == 0.0) return hi;
  if (f_lo * f_hi > 0.0) {
    std::ostringstream os;
    os << "find_positive_root: no sign change on [" << lo << ", " << hi << "]";
    throw no_root_error(os.str());
  }
  double mid = 0.5 * (lo + hi);
  for (int iter = 0; iter < kBisectionMaxIters; ++iter) {
    mid = 0.5 * (lo + hi);
    const double f_mid = f(mid);
    if (std::abs(f_mid) <= tol || (hi - lo) <= tol) return mid;
    if ((f_mid < 0.0) == (f_lo < 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  return mid;
}

}  // namespace ftlab
