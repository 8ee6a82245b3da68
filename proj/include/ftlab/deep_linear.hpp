#pragma once

// Depth-L linear networks f(x) = x^T W_1 W_2 ... W_L fine-tuned from a source
// teacher, plus the closed-form limits of gradient flow on them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ftlab/datasets.hpp"
#include "ftlab/error.hpp"
#include "ftlab/linalg.hpp"
#include "ftlab/linear_ft.hpp"
#include "ftlab/random.hpp"

namespace ftlab {

// layers[0] is d x d_1, layers[l] is d_l x d_{l+1}, layers.back() is d_{L-1} x 1.
struct DeepLinearNet {
  std::vector<Matrix> layers;
  bool balanced_init = false;

  int depth() const { return static_cast<int>(layers.size()); }
  Eigen::Index input_dim() const { return layers.front().rows(); }

  Vector end_to_end() const {
    Vector v = layers.back();
    for (int l = depth() - 2; l >= 0; --l) v = layers[static_cast<std::size_t>(l)] * v;
    return v;
  }
};

inline void validate_net(const DeepLinearNet& net) {
  if (net.layers.empty()) throw invalid_argument("DeepLinearNet: no layers");
  if (net.layers.back().cols() != 1) throw invalid_argument("DeepLinearNet: last layer must have one column");
  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
    if (net.layers[l].cols() != net.layers[l + 1].rows()) {
      std::ostringstream os;
      os << "DeepLinearNet: layer " << l + 1 << " has " << net.layers[l].cols() << " columns but layer "
         << l + 2 << " has " << net.layers[l + 1].rows() << " rows";
      throw dimension_mismatch(os.str());
    }
  }
  for (const auto& w : net.layers) require_finite(w, "DeepLinearNet layer");
}

namespace detail {

inline std::vector<Eigen::Index> resolve_hidden(Eigen::Index d, int depth,
                                                std::vector<Eigen::Index> hidden) {
  if (depth < 1) throw invalid_argument("deep net: depth must be >= 1");
  const auto want = static_cast<std::size_t>(depth - 1);
  if (hidden.empty()) hidden.assign(want, d);
  if (hidden.size() != want) {
    std::ostringstream os;
    os << "deep net: expected " << want << " hidden sizes, got " << hidden.size();
    throw invalid_argument(os.str());
  }
  for (auto h : hidden) {
    if (h < d) {
      std::ostringstream os;
      os << "deep net: hidden size " << h << " is smaller than input dimension " << d;
      throw invalid_argument(os.str());
    }
  }
  return hidden;
}

}  // namespace detail

// Rank-1, exactly 0-balanced factorization of theta: every layer has top
// singular value ||theta||^{1/L}.
inline DeepLinearNet balanced_init_from_teacher(const Vector& theta, int depth,
                                                std::vector<Eigen::Index> hidden, std::uint64_t seed) {
  require_finite(theta, "balanced_init_from_teacher");
  const double norm = theta.norm();
  if (!(norm > 0.0)) throw invalid_argument("balanced_init_from_teacher: zero teacher");
  const Eigen::Index d = theta.size();
  hidden = detail::resolve_hidden(d, depth, std::move(hidden));

  DeepLinearNet net;
  net.balanced_init = true;
  if (depth == 1) {
    net.layers.push_back(theta);
    return net;
  }
  const double s = std::pow(norm, 1.0 / depth);
  Rng rng = make_rng(seed);
  std::vector<Vector> v;
  for (auto h : hidden) v.push_back(random_unit_vector(h, rng));

  net.layers.push_back((theta / norm) * s * v[0].transpose());
  for (int l = 1; l + 1 < depth; ++l) {
    net.layers.push_back(v[static_cast<std::size_t>(l - 1)] * s * v[static_cast<std::size_t>(l)].transpose());
  }
  net.layers.push_back(v.back() * s);
  return net;
}

// Entries i.i.d. N(0, kappa^2); approximately balanced for small kappa.
inline DeepLinearNet small_random_init(Eigen::Index d, int depth, std::vector<Eigen::Index> hidden,
                                       double kappa, std::uint64_t seed) {
  if (!(kappa > 0.0)) throw invalid_argument("small_random_init: kappa must be positive");
  hidden = detail::resolve_hidden(d, depth, std::move(hidden));
  Rng rng = make_rng(seed);
  DeepLinearNet net;
  Eigen::Index rows = d;
  for (auto h : hidden) {
    net.layers.push_back(gaussian_matrix(rows, h, rng, kappa));
    rows = h;
  }
  net.layers.push_back(gaussian_matrix(rows, 1, rng, kappa));
  return net;
}

// max_j ||W_j^T W_j - W_{j+1} W_{j+1}^T||_F
inline double balancedness_residual(const DeepLinearNet& net) {
  double worst = 0.0;
  for (std::size_t j = 0; j + 1 < net.layers.size(); ++j) {
    const Matrix& a = net.layers[j];
    const Matrix& b = net.layers[j + 1];
    worst = std::max(worst, (a.transpose() * a - b * b.transpose()).norm());
  }
  return worst;
}

struct DeepTrajectoryPoint {
  long step = 0;
  double train_loss = 0.0;
  double beta_norm = 0.0;
  double balancedness = 0.0;
};

struct DeepFtResult {
  DeepLinearNet net_final;
  Vector beta;
  std::vector<DeepTrajectoryPoint> trajectory;
  int frozen_prefix = 0;
  long iterations = 0;
  double final_train_loss = 0.0;
  bool converged = false;
};

struct DeepGdOptions {
  double eta = 1e-3;
  double tol = 1e-10;
  long max_iters = 2000000;
  int frozen_prefix = 0;
  long record_every = 0;  // 0: first and last step only
  // Stop after exactly max_iters steps regardless of the loss (fixed
  // physical time runs). Never raises non-convergence.
  bool fixed_steps = false;
};

// GD on (1/n)||X beta - y||^2 over the layers. Layers 1..frozen_prefix are
// never touched. Unfrozen runs that miss tol raise; frozen runs report.
inline DeepFtResult gd_finetune_deep(const DeepLinearNet& net, const Matrix& x, const Vector& y,
                                     const DeepGdOptions& opt = {}) {
  validate_net(net);
  if (x.rows() != y.size() || x.cols() != net.input_dim()) {
    throw dimension_mismatch("gd_finetune_deep: X, y and the network disagree in size");
  }
  if (!(opt.eta > 0.0)) throw invalid_argument("gd_finetune_deep: eta must be positive");
  if (opt.frozen_prefix < 0 || opt.frozen_prefix >= net.depth()) {
    throw invalid_argument("gd_finetune_deep: frozen_prefix must lie in [0, L)");
  }
  require_finite(x, "gd_finetune_deep X");
  require_finite(y, "gd_finetune_deep y");

  const int depth = net.depth();
  const auto L = static_cast<std::size_t>(depth);
  const double n = static_cast<double>(x.rows());
  DeepFtResult out;
  out.net_final = net;
  out.frozen_prefix = opt.frozen_prefix;
  auto& w = out.net_final.layers;

  // suffix[l] = W_{l+1} ... W_L (column vector), suffix[L] = 1
  std::vector<Vector> suffix(L + 1);
  std::vector<Vector> prefix(L);  // prefix[l] = (W_1 ... W_l)^T g, prefix[0] = g
  auto forward = [&]() {
    suffix[L] = Vector::Ones(1);
    for (std::size_t l = L; l-- > 0;) suffix[l] = w[l] * suffix[l + 1];
    return suffix[0];
  };

  auto record = [&](long step, double loss, const Vector& beta) {
    out.trajectory.push_back({step, loss, beta.norm(), balancedness_residual(out.net_final)});
  };

  double prev = std::numeric_limits<double>::infinity();
  int rising = 0;
  for (long it = 0;; ++it) {
    const Vector beta = forward();
    const Vector r = x * beta - y;
    const double loss = r.squaredNorm() / n;
    out.iterations = it;
    out.final_train_loss = loss;
    out.beta = beta;
    if (!std::isfinite(loss)) throw divergence_error("gd_finetune_deep: loss is not finite");

    const bool done_fixed = opt.fixed_steps && it >= opt.max_iters;
    const bool done_tol = !opt.fixed_steps && loss <= opt.tol;
    const bool out_of_budget = !opt.fixed_steps && it >= opt.max_iters;
    if (done_fixed || done_tol || out_of_budget) {
      out.converged = loss <= opt.tol;
      record(it, loss, beta);
      if (out_of_budget && !done_tol && opt.frozen_prefix == 0) {
        std::ostringstream os;
        os << "gd_finetune_deep: train MSE " << loss << " above tol " << opt.tol << " after "
           << opt.max_iters << " iterations";
        throw non_convergence_error(os.str());
      }
      return out;
    }
    if (it == 0 || (opt.record_every > 0 && it % opt.record_every == 0)) record(it, loss, beta);

    rising = loss > prev ? rising + 1 : 0;
    if (rising >= kDivergencePatience) {
      std::ostringstream os;
      os << "gd_finetune_deep: loss increased for " << rising << " consecutive steps (eta = "
         << opt.eta << ")";
      throw divergence_error(os.str());
    }
    prev = loss;

    prefix[0] = (2.0 / n) * (x.transpose() * r);
    for (std::size_t l = 1; l < L; ++l) prefix[l] = w[l - 1].transpose() * prefix[l - 1];
    // all gradients use the pre-step weights
    for (std::size_t l = static_cast<std::size_t>(opt.frozen_prefix); l < L; ++l) {
      w[l].noalias() -= opt.eta * prefix[l] * suffix[l + 1].transpose();
    }
  }
}

struct FixedPointSolution {
  Vector beta;
  double norm = 0.0;      // r = ||beta||
  double residual = 0.0;  // scalar equation at r
  bool degenerate = false;
};

// Norm equation r^2 - (r/s)^{2(L-1)/L} a^2 - b^2.
inline double fixed_point_residual(double r, double a, double b, double s, int depth) {
  const double p = static_cast<double>(depth - 1) / depth;
  return r * r - std::pow(r / s, 2.0 * p) * a * a - b * b;
}

inline FixedPointSolution fixed_point_solve(const ProjectorPair& proj, const Vector& theta_s,
                                            const Vector& theta_t, int depth, double tol = 1e-13) {
  if (depth < 1) throw invalid_argument("fixed_point_predictor: depth must be >= 1");
  require_same_size(theta_s, theta_t, "fixed_point_predictor");
  const double s = theta_s.norm();
  if (!(s > 0.0)) throw invalid_argument("fixed_point_predictor: theta_S is zero");
  const Vector perp_s = proj.perp(theta_s);
  const Vector par_t = proj.parallel(theta_t);
  const double a = perp_s.norm();
  const double b = par_t.norm();

  FixedPointSolution out;
  if (depth == 1) {
    out.beta = perp_s + par_t;
    out.norm = out.beta.norm();
    out.residual = fixed_point_residual(out.norm, a, b, s, 1);
    return out;
  }
  const double p = static_cast<double>(depth - 1) / depth;
  double r = 0.0;
  if (b == 0.0) {
    // r = 0 solves the equation trivially; take the nonzero root instead.
    out.degenerate = true;
    r = std::pow(a, depth) / std::pow(s, depth - 1);
  } else {
    auto f = [&](double t) { return fixed_point_residual(t, a, b, s, depth); };
    double hi = s + a + b + 1.0;
    for (int i = 0; i < 200 && f(hi) <= 0.0; ++i) hi *= 2.0;
    r = find_positive_root(f, 0.0, hi, tol);
  }
  out.norm = r;
  out.residual = fixed_point_residual(r, a, b, s, depth);
  out.beta = std::pow(r / s, p) * perp_s + par_t;
  return out;
}

inline Vector fixed_point_predictor(const ProjectorPair& proj, const Vector& theta_s,
                                    const Vector& theta_t, int depth, double tol = 1e-13) {
  return fixed_point_solve(proj, theta_s, theta_t, depth, tol).beta;
}

namespace detail {

inline double parallel_source_norm(const ProjectorPair& proj, const Vector& theta_s, const char* who) {
  const double ps = proj.parallel(theta_s).norm();
  if (!(ps > 1e-14 * theta_s.norm()) || ps == 0.0) {
    throw degenerate_source_error(std::string(who) +
                                  ": source has no component in the row space of X");
  }
  return ps;
}

}  // namespace detail

inline Vector infinite_depth_predictor(const ProjectorPair& proj, const Vector& theta_s,
                                       const Vector& theta_t) {
  require_same_size(theta_s, theta_t, "infinite_depth_predictor");
  const double ps = detail::parallel_source_norm(proj, theta_s, "infinite_depth_predictor");
  const Vector par_t = proj.parallel(theta_t);
  return (par_t.norm() / ps) * proj.perp(theta_s) + par_t;
}

// ||Sigma^{1/2} P_perp (theta_T - (||P_par theta_T|| / ||P_par theta_S||) theta_S)||^2
inline double deep_population_risk(const ProjectorPair& proj, const Vector& theta_s,
                                   const Vector& theta_t, const GaussianDesign& design) {
  require_same_size(theta_s, theta_t, "deep_population_risk");
  const double ps = detail::parallel_source_norm(proj, theta_s, "deep_population_risk");
  const double ratio = proj.parallel(theta_t).norm() / ps;
  return std::max(0.0, design.eig.quadratic_form(proj.perp(Vector(theta_t - ratio * theta_s))));
}

struct GaussianRiskBounds {
  double deep = 0.0;
  double shallow = 0.0;
  double zeta = 0.0;
};

inline GaussianRiskBounds gaussian_risk_bounds(const Vector& theta_s, const Vector& theta_t,
                                               Eigen::Index d, Eigen::Index n, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw invalid_argument("gaussian_risk_bounds: eps must lie in (0, 1)");
  if (n < 0 || n > d) throw invalid_argument("gaussian_risk_bounds: need 0 <= n <= d");
  require_same_size(theta_s, theta_t, "gaussian_risk_bounds");
  const double ns = theta_s.norm();
  const double nt = theta_t.norm();
  if (!(ns > 0.0 && nt > 0.0)) throw invalid_argument("gaussian_risk_bounds: teachers must be nonzero");
  const double frac = static_cast<double>(d - n) / static_cast<double>(d);
  const double grow = (1.0 + eps) * (1.0 + eps);
  GaussianRiskBounds out;
  out.zeta = 2.0 * eps * (1.0 + eps) / (1.0 - eps) * nt;
  out.deep = frac * grow * nt * nt * (theta_t / nt - theta_s / ns).squaredNorm() + frac * out.zeta * out.zeta;
  out.shallow = frac * grow * (theta_t - theta_s).squaredNorm();
  return out;
}

// 1 / (L M^{2(L-1)/L} lambda_max((2/n) X^T X)) where M bounds ||beta|| along
// the run; the end-to-end Hessian scales like L ||beta||^{2(L-1)/L}.
inline double default_deep_step(const Matrix& x, int depth, double beta_scale) {
  const double p = 2.0 * (depth - 1) / depth;
  const double lmax = 2.0 / default_linear_step(x) * 0.9;
  return 1.0 / (depth * std::pow(std::max(beta_scale, 1e-12), p) * lmax);
}

}  // namespace ftlab
