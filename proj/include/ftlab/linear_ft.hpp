#pragma once

// One-layer linear regression fine-tuned from a source teacher.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ftlab/datasets.hpp"
#include "ftlab/error.hpp"
#include "ftlab/linalg.hpp"

namespace ftlab {

struct LinearFtResult {
  Vector gamma;
  long iterations = 0;
  double final_train_loss = 0.0;
};

struct BoundReport {
  double empirical_bound = 0.0;
  double concentration_bound = 0.0;
  Eigen::Index k_used = 0;
  double sigma_gap = 0.0;  // ||Sigma - Sigma_hat||_2
  double g_value = 0.0;
};

inline double train_mse(const Matrix& x, const Vector& y, const Vector& w) {
  return (x * w - y).squaredNorm() / static_cast<double>(x.rows());
}

// 0.9 * 2 / lambda_max((2/n) X^T X)
inline double default_linear_step(const Matrix& x) {
  const double n = static_cast<double>(x.rows());
  const Matrix gram = x * x.transpose();
  const double lmax = (2.0 / n) * spectral_norm_sym(gram);
  if (!(lmax > 0.0)) throw invalid_argument("default_linear_step: X is zero");
  return 0.9 * 2.0 / lmax;
}

inline constexpr int kDivergencePatience = 10;

inline LinearFtResult gd_finetune_linear(const Matrix& x, const Vector& y, const Vector& theta_init,
                                         double eta, double tol = 1e-10,
                                         long max_iters = 1000000) {
  if (x.rows() != y.size() || x.cols() != theta_init.size()) {
    throw dimension_mismatch("gd_finetune_linear: X, y and theta_init disagree in size");
  }
  if (!(eta > 0.0)) throw invalid_argument("gd_finetune_linear: eta must be positive");
  require_finite(x, "gd_finetune_linear X");
  require_finite(y, "gd_finetune_linear y");
  require_finite(theta_init, "gd_finetune_linear theta_init");

  const double n = static_cast<double>(x.rows());
  LinearFtResult out;
  out.gamma = theta_init;
  double prev = std::numeric_limits<double>::infinity();
  int rising = 0;
  for (long it = 0;; ++it) {
    const Vector r = x * out.gamma - y;
    const double loss = r.squaredNorm() / n;
    out.iterations = it;
    out.final_train_loss = loss;
    if (!std::isfinite(loss)) throw divergence_error("gd_finetune_linear: loss is not finite");
    if (loss <= tol) return out;
    rising = loss > prev ? rising + 1 : 0;
    if (rising >= kDivergencePatience) {
      std::ostringstream os;
      os << "gd_finetune_linear: loss increased for " << rising << " consecutive steps (eta = " << eta
         << ")";
      throw divergence_error(os.str());
    }
    if (it >= max_iters) {
      std::ostringstream os;
      os << "gd_finetune_linear: train MSE " << loss << " above tol " << tol << " after " << max_iters
         << " iterations";
      throw non_convergence_error(os.str());
    }
    prev = loss;
    out.gamma -= (eta * 2.0 / n) * (x.transpose() * r);
  }
}

inline LinearFtResult gd_finetune_linear(const Matrix& x, const Vector& y, const Vector& theta_init) {
  return gd_finetune_linear(x, y, theta_init, default_linear_step(x));
}

inline Vector closed_form_linear(const ProjectorPair& proj, const Vector& theta_s,
                                 const Vector& theta_t) {
  require_same_size(theta_s, theta_t, "closed_form_linear");
  require_same_size(theta_s, Vector::Zero(proj.dim()), "closed_form_linear");
  return proj.perp(theta_s) + proj.parallel(theta_t);
}

// (w - theta_T)^T Sigma (w - theta_T)
inline double population_risk_linear(const Vector& w, const Vector& theta_t,
                                     const GaussianDesign& design) {
  require_same_size(w, theta_t, "population_risk_linear");
  require_same_size(w, design.eig.lambda, "population_risk_linear");
  return std::max(0.0, design.eig.quadratic_form(w - theta_t));
}

inline double sigma_gap(const Matrix& sigma, const Matrix& x) {
  if (x.cols() != sigma.rows()) throw dimension_mismatch("sigma_gap: X and Sigma disagree in d");
  return spectral_norm_sym(empirical_covariance(x) - sigma);
}

inline double sigma_gap(const EigenDecomp& e, const Matrix& x) { return sigma_gap(e.reconstruct(), x); }

namespace detail {

inline void check_k(const EigenDecomp& e, Eigen::Index k, const char* who) {
  if (k < 1 || k > e.dim()) {
    std::ostringstream os;
    os << who << ": k = " << k << " outside [1, " << e.dim() << "]";
    throw invalid_argument(os.str());
  }
  if (!(e.lambda(k - 1) > 0.0)) {
    std::ostringstream os;
    os << who << ": lambda_" << k << " = " << e.lambda(k - 1) << " is not positive";
    throw invalid_argument(os.str());
  }
}

// (||P_{<=k} v||^2, ||P_{>k} v||^2)
inline std::pair<double, double> split_energy(const EigenDecomp& e, const Vector& v, Eigen::Index k) {
  const Vector c = e.V.transpose() * v;
  return {c.head(k).squaredNorm(), c.tail(e.dim() - k).squaredNorm()};
}

inline double two_term_bound(double gap, double lambda_k, std::pair<double, double> energy) {
  return 2.0 * gap * gap * gap / (lambda_k * lambda_k) * energy.first + 2.0 * gap * energy.second;
}

}  // namespace detail

// ||Vtilde_{>n}^T V_{<=k}||_2. Vtilde_{>n} spans the null space of X, so this
// is ||P_perp V_{<=k}||_2.
inline double davis_kahan_gap(const EigenDecomp& e, const Matrix& x, Eigen::Index k) {
  detail::check_k(e, k, "davis_kahan_gap");
  if (x.cols() != e.dim()) throw dimension_mismatch("davis_kahan_gap: X and Sigma disagree in d");
  if (x.rows() >= x.cols()) throw invalid_argument("davis_kahan_gap: needs n < d");
  const ProjectorPair proj = projectors_from_rows(x);
  return spectral_norm(proj.perp(Matrix(e.top(k))));
}

// Same chain with a precomputed ||Sigma - Sigma_hat||.
inline BoundReport risk_upper_bound_from_gap(const EigenDecomp& e, double gap, const Vector& theta_s,
                                             const Vector& theta_t, Eigen::Index k) {
  detail::check_k(e, k, "risk_upper_bound_empirical");
  require_same_size(theta_s, theta_t, "risk_upper_bound_empirical");
  require_same_size(theta_s, e.lambda, "risk_upper_bound_empirical");
  if (!(gap >= 0.0)) throw invalid_argument("risk_upper_bound_empirical: negative sigma gap");
  BoundReport out;
  out.k_used = k;
  out.sigma_gap = gap;
  out.empirical_bound =
      detail::two_term_bound(gap, e.lambda(k - 1), detail::split_energy(e, theta_t - theta_s, k));
  return out;
}

inline BoundReport risk_upper_bound_empirical(const EigenDecomp& e, const Matrix& x,
                                              const Vector& theta_s, const Vector& theta_t,
                                              Eigen::Index k) {
  detail::check_k(e, k, "risk_upper_bound_empirical");
  return risk_upper_bound_from_gap(e, sigma_gap(e, x), theta_s, theta_t, k);
}

inline double g_function(const Vector& lambda, double delta, double n, double c) {
  const double l1 = lambda.maxCoeff();
  const double r = lambda.sum() / (n * l1);
  const double q = delta / n;
  return c * l1 * std::max({std::sqrt(r), r, std::sqrt(q), q});
}

inline BoundReport risk_upper_bound_concentration(const EigenDecomp& e, Eigen::Index n, double delta,
                                                  double c, const Vector& theta_s,
                                                  const Vector& theta_t, Eigen::Index k) {
  if (!(delta >= 1.0)) throw invalid_argument("risk_upper_bound_concentration: delta must be >= 1");
  if (!(c > 0.0)) throw invalid_argument("risk_upper_bound_concentration: c must be positive");
  if (n < 1) throw invalid_argument("risk_upper_bound_concentration: n must be positive");
  detail::check_k(e, k, "risk_upper_bound_concentration");
  require_same_size(theta_s, theta_t, "risk_upper_bound_concentration");
  require_same_size(theta_s, e.lambda, "risk_upper_bound_concentration");
  BoundReport out;
  out.k_used = k;
  out.g_value = g_function(e.lambda, delta, static_cast<double>(n), c);
  out.concentration_bound = detail::two_term_bound(out.g_value, e.lambda(k - 1),
                                                   detail::split_energy(e, theta_t - theta_s, k));
  return out;
}

// Picks the k with the sharpest drop lambda_{k+1} / lambda_k < rho. Ties go to
// the larger k; no drop at all means k = d.
inline Eigen::Index select_k_heuristic(const EigenDecomp& e, double rho = 0.5) {
  const Eigen::Index d = e.dim();
  Eigen::Index best = d;
  double best_ratio = rho;
  for (Eigen::Index k = 1; k < d; ++k) {
    const double lk = e.lambda(k - 1);
    if (!(lk > 0.0)) break;
    const double ratio = e.lambda(k) / lk;
    if (ratio < rho && ratio <= best_ratio) {
      best_ratio = ratio;
      best = k;
    }
  }
  return best;
}

}  // namespace ftlab
