#pragma once

// Synthetic Gaussian designs and source/target teacher pairs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ftlab/error.hpp"
#include "ftlab/linalg.hpp"
#include "ftlab/random.hpp"

namespace ftlab {

// Target distribution N(0, Sigma) with Sigma = V diag(lambda) V^T.
struct GaussianDesign {
  EigenDecomp eig;
  Matrix factor;  // V diag(sqrt(lambda)); x = factor * g for g ~ N(0, I)

  Eigen::Index dim() const { return eig.dim(); }
  Matrix covariance() const { return eig.reconstruct(); }
};

namespace detail {

inline GaussianDesign finish_design(EigenDecomp eig) {
  GaussianDesign out;
  out.factor = eig.V * eig.lambda.cwiseSqrt().asDiagonal();
  out.eig = std::move(eig);
  return out;
}

// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the signs
// of diag(R) folded into Q.
inline Matrix random_orthogonal(Eigen::Index d, Rng& rng) {
  const Matrix g = gaussian_matrix(d, d, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

}  // namespace detail

inline GaussianDesign make_design(std::vector<double> spectrum, std::uint64_t seed) {
  if (spectrum.empty()) throw invalid_argument("make_design: empty spectrum");
  for (double l : spectrum) {
    if (!std::isfinite(l)) throw invalid_argument("make_design: non-finite eigenvalue");
    if (l < 0.0) {
      std::ostringstream os;
      os << "make_design: negative eigenvalue " << l;
      throw invalid_argument(os.str());
    }
  }
  std::sort(spectrum.begin(), spectrum.end(), std::greater<>());
  const auto d = static_cast<Eigen::Index>(spectrum.size());
  Rng rng = make_rng(seed);
  EigenDecomp eig;
  eig.V = detail::random_orthogonal(d, rng);
  eig.lambda = Eigen::Map<const Vector>(spectrum.data(), d);
  return detail::finish_design(std::move(eig));
}

// Sigma = I with V = I. Handy when the basis does not matter.
inline GaussianDesign identity_design(Eigen::Index d) {
  if (d < 1) throw invalid_argument("identity_design: d must be positive");
  EigenDecomp eig;
  eig.V = Matrix::Identity(d, d);
  eig.lambda = Vector::Ones(d);
  return detail::finish_design(std::move(eig));
}

inline GaussianDesign design_from_covariance(const Matrix& sigma) {
  return detail::finish_design(eig_covariance(sigma));
}

// Two-level spectrum used by the alignment experiment.
struct Fig1Preset {
  Eigen::Index d = 1000;
  Eigen::Index m = 50;
  double top = 1.5;
  double bottom = 0.3;

  std::vector<double> spectrum() const {
    std::vector<double> s(static_cast<std::size_t>(d), bottom);
    std::fill(s.begin(), s.begin() + m, top);
    return s;
  }
};

inline Matrix sample(const GaussianDesign& design, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw invalid_argument("sample: n must be positive");
  Rng rng = make_rng(seed);
  const Matrix g = gaussian_matrix(n, design.dim(), rng);
  return g * design.factor.transpose();
}

enum class TaskMode { random, top_eigen_align, bottom_eigen_align, scaled_aligned, direction_fixed_scale };
enum class ScaleSide { source, target };

inline std::string to_string(TaskMode m) {
  switch (m) {
    case TaskMode::random: return "random";
    case TaskMode::top_eigen_align: return "top-eigen-align";
    case TaskMode::bottom_eigen_align: return "bottom-eigen-align";
    case TaskMode::scaled_aligned: return "scaled-aligned";
    case TaskMode::direction_fixed_scale: return "direction-fixed-scale";
  }
  return "unknown";
}

inline std::string to_string(ScaleSide s) { return s == ScaleSide::source ? "source" : "target"; }

struct TaskPairSpec {
  TaskMode mode = TaskMode::random;
  double source_norm = 1.0;
  double target_norm = 1.0;  // random mode only
  double diff_norm = 1.0;    // alignment modes: ||theta_T - theta_S||
  Eigen::Index m = 50;       // alignment modes: top/bottom split index
  double alpha = 1.0;
  double noise_ratio = 0.5;  // scaled-aligned: ||eps|| = noise_ratio * ||theta_S||
  ScaleSide side = ScaleSide::target;
  double alignment = 0.1;    // direction-fixed-scale: ||unit(theta_T) - unit(theta_S)||
  std::uint64_t seed = 0;
};

struct TaskPair {
  Vector theta_s;
  Vector theta_t;
};

namespace detail {

inline Vector random_in_span(const Matrix& basis, double norm, Rng& rng) {
  const Vector c = random_unit_vector(basis.cols(), rng);
  Vector v = basis * c;
  return v * (norm / v.norm());
}

}  // namespace detail

inline TaskPair make_task_pair(const TaskPairSpec& spec, const GaussianDesign& design) {
  const Eigen::Index d = design.dim();
  if (!(spec.source_norm > 0.0)) throw invalid_argument("make_task_pair: source_norm must be positive");
  // Separate streams so e.g. the source vector does not depend on the mode.
  Rng src_rng = make_rng(derive_seed(spec.seed, 0));
  Rng aux_rng = make_rng(derive_seed(spec.seed, 1));
  TaskPair out;

  switch (spec.mode) {
    case TaskMode::random: {
      if (!(spec.target_norm >= 0.0)) throw invalid_argument("make_task_pair: negative target_norm");
      out.theta_s = spec.source_norm * random_unit_vector(d, src_rng);
      out.theta_t = spec.target_norm * random_unit_vector(d, aux_rng);
      break;
    }
    case TaskMode::top_eigen_align:
    case TaskMode::bottom_eigen_align: {
      if (!(spec.diff_norm > 0.0)) {
        throw invalid_argument("make_task_pair: alignment modes need a positive diff_norm");
      }
      if (spec.m < 1 || spec.m >= d) {
        std::ostringstream os;
        os << "make_task_pair: split index m = " << spec.m << " must lie in [1, " << d - 1 << "]";
        throw invalid_argument(os.str());
      }
      out.theta_s = spec.source_norm * random_unit_vector(d, src_rng);
      // top-eigen-align: difference invisible to the top span, so it lives in the bottom span.
      const Matrix basis = spec.mode == TaskMode::top_eigen_align ? design.eig.bottom(spec.m)
                                                                  : design.eig.top(spec.m);
      out.theta_t = out.theta_s + detail::random_in_span(basis, spec.diff_norm, aux_rng);
      break;
    }
    case TaskMode::scaled_aligned: {
      if (!(spec.alpha > 0.0)) throw invalid_argument("make_task_pair: alpha must be positive");
      if (!(spec.noise_ratio >= 0.0)) throw invalid_argument("make_task_pair: negative noise_ratio");
      out.theta_s = spec.source_norm * random_unit_vector(d, src_rng);
      out.theta_t = spec.alpha * out.theta_s;
      if (spec.noise_ratio > 0.0) {
        out.theta_t += (spec.noise_ratio * spec.source_norm) * random_unit_vector(d, aux_rng);
      }
      break;
    }
    case TaskMode::direction_fixed_scale: {
      if (!(spec.alpha > 0.0)) throw invalid_argument("make_task_pair: alpha must be positive");
      if (!(spec.alignment >= 0.0 && spec.alignment <= 2.0)) {
        throw invalid_argument("make_task_pair: alignment must lie in [0, 2]");
      }
      if (d < 2) throw invalid_argument("make_task_pair: direction-fixed-scale needs d >= 2");
      const Vector s_hat = random_unit_vector(d, src_rng);
      Vector u = random_unit_vector(d, aux_rng);
      u -= s_hat.dot(u) * s_hat;
      u.normalize();
      // chord length 2 sin(phi/2) between the two unit directions
      const double phi = 2.0 * std::asin(spec.alignment / 2.0);
      const Vector t_hat = std::cos(phi) * s_hat + std::sin(phi) * u;
      if (spec.side == ScaleSide::target) {
        out.theta_s = s_hat;
        out.theta_t = spec.alpha * t_hat;
      } else {
        out.theta_s = spec.alpha * s_hat;
        out.theta_t = t_hat;
      }
      break;
    }
  }
  return out;
}

}  // namespace ftlab
