#pragma once

// Two-layer ReLU networks f(x) = m^{-1/2} sum_r a_r relu(x^T w_r) with the
// output signs a frozen, trained by GD on the first layer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "ftlab/error.hpp"
#include "ftlab/linalg.hpp"
#include "ftlab/random.hpp"

namespace ftlab {

struct ReluNtkNet {
  Matrix W;  // m x d
  Vector a;  // m, entries +-1
  double kappa = 1.0;

  Eigen::Index width() const { return W.rows(); }
  Eigen::Index dim() const { return W.cols(); }
};

struct NtkGram {
  Matrix H;
  double lambda_min = 0.0;
};

inline constexpr double kUnitNormTol = 1e-8;
inline constexpr double kGramSingularTol = 1e-10;

inline void require_unit_rows(const Matrix& x, const char* who) {
  require_finite(x, who);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double nrm = x.row(i).norm();
    if (std::abs(nrm - 1.0) > kUnitNormTol) {
      std::ostringstream os;
      os << who << ": row " << i << " has norm " << nrm << ", expected 1";
      throw invalid_argument(os.str());
    }
  }
}

inline Matrix normalize_rows(Matrix x) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double nrm = x.row(i).norm();
    if (nrm == 0.0) throw invalid_argument("normalize_rows: zero row");
    x.row(i) /= nrm;
  }
  return x;
}

inline ReluNtkNet init_relu_net(Eigen::Index m, Eigen::Index d, double kappa, std::uint64_t seed) {
  if (m < 1 || d < 1) throw invalid_argument("init_relu_net: m and d must be positive");
  if (!(kappa > 0.0)) throw invalid_argument("init_relu_net: kappa must be positive");
  Rng rng = make_rng(seed);
  ReluNtkNet net;
  net.kappa = kappa;
  net.W = gaussian_matrix(m, d, rng, kappa);
  std::bernoulli_distribution coin(0.5);
  net.a.resize(m);
  for (Eigen::Index r = 0; r < m; ++r) net.a(r) = coin(rng) ? 1.0 : -1.0;
  return net;
}

inline Vector relu_predict(const ReluNtkNet& net, const Matrix& x) {
  if (x.cols() != net.dim()) throw dimension_mismatch("relu_predict: X has the wrong width");
  const Matrix pre = x * net.W.transpose();
  return pre.cwiseMax(0.0) * net.a / std::sqrt(static_cast<double>(net.width()));
}

namespace detail {

inline double min_eigenvalue(const Matrix& h) {
  if (h.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(h, Eigen::EigenvaluesOnly);
  return solver.eigenvalues()(0);
}

}  // namespace detail

// H_ij = x_i^T x_j (pi - arccos(x_i^T x_j)) / (2 pi)
inline NtkGram ntk_gram_infinite(const Matrix& x, bool unit_norm = true) {
  if (x.rows() == 0) throw invalid_argument("ntk_gram_infinite: no samples");
  if (unit_norm) {
    require_unit_rows(x, "ntk_gram_infinite");
  } else {
    require_finite(x, "ntk_gram_infinite");
  }
  const Eigen::Index n = x.rows();
  Matrix g = x * x.transpose();
  const Vector norms = x.rowwise().norm();
  NtkGram out;
  out.H.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (unit_norm) g(i, i) = 1.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double denom = norms(i) * norms(j);
      double c = denom > 0.0 ? g(i, j) / denom : 0.0;
      if (i == j && denom > 0.0) c = 1.0;
      c = std::clamp(c, -1.0, 1.0);
      if (i != j && c >= 1.0 - 1e-12) {
        std::ostringstream os;
        os << "ntk_gram_infinite: rows " << i << " and " << j << " are parallel";
        throw singular_gram_error(os.str());
      }
      out.H(i, j) = g(i, j) * (std::numbers::pi - std::acos(c)) / (2.0 * std::numbers::pi);
    }
  }
  out.lambda_min = detail::min_eigenvalue(out.H);
  if (!(out.lambda_min > kGramSingularTol)) {
    std::ostringstream os;
    os << "ntk_gram_infinite: lambda_min = " << out.lambda_min << " is not positive";
    throw singular_gram_error(os.str());
  }
  return out;
}

inline Matrix activation_pattern(const ReluNtkNet& net, const Matrix& x) {
  return (x * net.W.transpose()).unaryExpr([](double v) { return v >= 0.0 ? 1.0 : 0.0; });
}

// H_ij = (1/m) x_i^T x_j sum_r 1{w_r^T x_i >= 0, w_r^T x_j >= 0}
inline NtkGram ntk_gram_finite(const ReluNtkNet& net, const Matrix& x) {
  if (x.cols() != net.dim()) throw dimension_mismatch("ntk_gram_finite: X has the wrong width");
  require_unit_rows(x, "ntk_gram_finite");
  const Matrix act = activation_pattern(net, x);
  NtkGram out;
  out.H = (x * x.transpose()).cwiseProduct(act * act.transpose()) / static_cast<double>(net.width());
  out.lambda_min = detail::min_eigenvalue(out.H);
  return out;
}

inline double default_ntk_eta(double lambda0, Eigen::Index n) {
  return 0.1 * lambda0 / static_cast<double>(n * n);
}

inline double default_ntk_kappa(double lambda0, Eigen::Index n) {
  return 0.1 * lambda0 / static_cast<double>(n);
}

// 10 (1 / (eta lambda0)) max(1, log(1 / ||y_tilde||))
inline long default_ntk_iters(double eta, double lambda0, double y_tilde_norm) {
  const double log_factor = y_tilde_norm > 0.0 ? std::max(1.0, std::log(1.0 / y_tilde_norm)) : 1.0;
  return static_cast<long>(std::ceil(10.0 / (eta * lambda0) * log_factor));
}

// sqrt(sum_i (1 - eta lambda_i)^{2t} (v_i^T y_tilde)^2)
inline double predicted_residual(const EigenDecomp& h_inf, const Vector& y_tilde, double eta, long t) {
  const Vector c = h_inf.V.transpose() * y_tilde;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const double decay = std::pow(1.0 - eta * h_inf.lambda(i), static_cast<double>(t));
    acc += decay * decay * c(i) * c(i);
  }
  return std::sqrt(acc);
}

struct NtkBounds {
  double finetune_bound = 0.0;  // 2 sqrt(y_tilde^T H^{-1} y_tilde / n)
  double log_term = 0.0;        // sqrt(log(n / (lambda0 delta)) / n), constant 1
  std::optional<double> linear_corollary_bound;  // 6 ||theta_T - theta_S|| / sqrt(n)
  std::optional<double> random_init_bound;       // 3 sqrt(2) ||theta_T|| / sqrt(n)
};

struct NtkCurvePoint {
  long step = 0;
  double value = 0.0;
};

struct NtkFtReport {
  std::vector<NtkCurvePoint> loss_curve;       // ||y - u(t)||
  std::vector<NtkCurvePoint> predicted_curve;  // spectral prediction from H_inf
  std::vector<NtkCurvePoint> gram_drift;       // ||H(t) - H_inf||_F
  std::vector<NtkCurvePoint> gram_change;      // ||H(t) - H(0)||_F
  double weight_drift_max = 0.0;               // max_t max_r ||w_r(t) - w_r(0)||
  double lambda0 = 0.0;
  double eta = 0.0;
  long iterations = 0;
  Vector y_tilde;
  std::optional<NtkBounds> bounds;

  // max_t | loss_curve(t) - predicted_curve(t) |
  double max_curve_deviation() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < loss_curve.size(); ++i) {
      worst = std::max(worst, std::abs(loss_curve[i].value - predicted_curve[i].value));
    }
    return worst;
  }
};

struct NtkTrainOptions {
  long record_every = 1;
  long gram_every = 0;  // 0: only first and last step
  // Stop as soon as (1/n)||u - y||^2 <= stop_mse. 0 disables.
  double stop_mse = 0.0;
};

inline double quad_form_inverse(const Matrix& h, const Vector& v) {
  Eigen::LLT<Matrix> llt(h);
  if (llt.info() != Eigen::Success) throw singular_gram_error("quad_form_inverse: H is not positive definite");
  return v.dot(llt.solve(v));
}

// GD on (1/2)||u - y||^2 over W; a stays fixed.
inline std::pair<ReluNtkNet, NtkFtReport> gd_train_relu(const ReluNtkNet& net, const Matrix& x,
                                                        const Vector& y, double eta, long iters,
                                                        const NtkTrainOptions& opt = {}) {
  if (x.rows() != y.size()) throw dimension_mismatch("gd_train_relu: X and y disagree in n");
  if (x.cols() != net.dim()) throw dimension_mismatch("gd_train_relu: X has the wrong width");
  if (!(eta > 0.0)) throw invalid_argument("gd_train_relu: eta must be positive");
  if (iters < 0) throw invalid_argument("gd_train_relu: iters must be >= 0");
  require_unit_rows(x, "gd_train_relu");
  require_finite(y, "gd_train_relu y");
  if (y.size() > 0 && y.cwiseAbs().maxCoeff() > 1.0 + 1e-12) {
    throw invalid_argument("gd_train_relu: labels must satisfy |y_i| <= 1");
  }

  const NtkGram h_inf = ntk_gram_infinite(x);
  const EigenDecomp h_eig = eig_sym(h_inf.H);
  const double n = static_cast<double>(x.rows());
  const double scale = 1.0 / std::sqrt(static_cast<double>(net.width()));

  ReluNtkNet cur = net;
  NtkFtReport rep;
  rep.lambda0 = h_inf.lambda_min;
  rep.eta = eta;
  Vector u = relu_predict(cur, x);
  rep.y_tilde = y - u;
  const Matrix h0 = ntk_gram_finite(cur, x).H;

  auto record_gram = [&](long t) {
    const Matrix h = ntk_gram_finite(cur, x).H;
    rep.gram_drift.push_back({t, (h - h_inf.H).norm()});
    rep.gram_change.push_back({t, (h - h0).norm()});
  };
  auto record_loss = [&](long t, double res) {
    rep.loss_curve.push_back({t, res});
    rep.predicted_curve.push_back({t, predicted_residual(h_eig, rep.y_tilde, eta, t)});
    rep.weight_drift_max = std::max(rep.weight_drift_max, (cur.W - net.W).rowwise().norm().maxCoeff());
  };

  double prev = std::numeric_limits<double>::infinity();
  int rising = 0;
  for (long t = 0;; ++t) {
    const Vector r = u - y;
    const double res = r.norm();
    if (!std::isfinite(res)) throw divergence_error("gd_train_relu: prediction is not finite");
    const bool stop = t >= iters || (opt.stop_mse > 0.0 && res * res / n <= opt.stop_mse);
    if (stop || (opt.record_every > 0 && t % opt.record_every == 0)) record_loss(t, res);
    if (stop || t == 0 || (opt.gram_every > 0 && t % opt.gram_every == 0)) record_gram(t);
    if (stop) {
      rep.iterations = t;
      break;
    }
    rising = res > prev ? rising + 1 : 0;
    if (rising >= 10) {
      std::ostringstream os;
      os << "gd_train_relu: residual increased for " << rising << " consecutive steps (eta = " << eta << ")";
      throw divergence_error(os.str());
    }
    prev = res;

    // d/dw_r = m^{-1/2} a_r sum_i (u_i - y_i) 1{w_r^T x_i >= 0} x_i
    const Matrix act = activation_pattern(cur, x);  // n x m
    const Matrix weighted = r.asDiagonal() * act;
    cur.W -= (eta * scale) * (cur.a.asDiagonal() * (weighted.transpose() * x));
    u = relu_predict(cur, x);
  }
  return {std::move(cur), std::move(rep)};
}

inline NtkBounds ntk_generalization_bounds(const NtkGram& h_inf, const Vector& y_tilde,
                                           const std::optional<Vector>& theta_s = std::nullopt,
                                           const std::optional<Vector>& theta_t = std::nullopt,
                                           double delta = 0.1) {
  const Eigen::Index n = h_inf.H.rows();
  if (y_tilde.size() != n) throw dimension_mismatch("ntk_generalization_bounds: y_tilde has the wrong size");
  if (!(h_inf.lambda_min > 0.0)) throw singular_gram_error("ntk_generalization_bounds: lambda_min <= 0");
  if (!(delta > 0.0)) throw invalid_argument("ntk_generalization_bounds: delta must be positive");
  const double nn = static_cast<double>(n);
  NtkBounds out;
  out.finetune_bound = 2.0 * std::sqrt(std::max(0.0, quad_form_inverse(h_inf.H, y_tilde)) / nn);
  out.log_term = std::sqrt(std::max(0.0, std::log(nn / (h_inf.lambda_min * delta))) / nn);
  if (theta_t) {
    out.random_init_bound = 3.0 * std::sqrt(2.0) * theta_t->norm() / std::sqrt(nn);
    if (theta_s) {
      require_same_size(*theta_s, *theta_t, "ntk_generalization_bounds");
      out.linear_corollary_bound = 6.0 * (*theta_t - *theta_s).norm() / std::sqrt(nn);
    }
  }
  return out;
}

// Fine-tuning provably beats training from scratch: 6||dtheta|| < 3 sqrt(2) ||theta_T||.
inline bool finetune_beats_random(const Vector& theta_s, const Vector& theta_t) {
  return 6.0 * (theta_t - theta_s).norm() < 3.0 * std::sqrt(2.0) * theta_t.norm();
}

struct PretrainFinetuneOptions {
  Eigen::Index m = 10000;
  double kappa = 1.0;
  double eta_s = 0.0;  // 0: 1 / lambda_max(H_inf) of the source data
  double eta_t = 0.0;  // 0: 1 / lambda_max(H_inf) of the target data
  std::uint64_t seed = 0;
  double pretrain_tol = 1e-5;  // source MSE
  long pretrain_max_iters = 200000;
  long finetune_iters = 0;  // 0: default_ntk_iters
  double delta = 0.1;
  long record_every = 1;
  long gram_every = 0;
  std::optional<Vector> theta_s;
  std::optional<Vector> theta_t;
};

struct PretrainFinetuneResult {
  NtkFtReport report;
  ReluNtkNet pretrained;
  ReluNtkNet finetuned;
  Vector y_tilde;
  double pretrain_mse = 0.0;
  long pretrain_iterations = 0;
};

inline double stable_ntk_eta(const Matrix& x) {
  const NtkGram h = ntk_gram_infinite(x);
  return 1.0 / spectral_norm_sym(h.H);
}

inline PretrainFinetuneResult pretrain_then_finetune(const Matrix& x_s, const Vector& y_s,
                                                     const Matrix& x, const Vector& y,
                                                     const PretrainFinetuneOptions& opt = {}) {
  require_unit_rows(x_s, "pretrain_then_finetune X_S");
  require_unit_rows(x, "pretrain_then_finetune X");
  if (x_s.cols() != x.cols()) throw dimension_mismatch("pretrain_then_finetune: source and target d differ");

  PretrainFinetuneResult out;
  const ReluNtkNet init = init_relu_net(opt.m, x.cols(), opt.kappa, opt.seed);
  const double eta_s = opt.eta_s > 0.0 ? opt.eta_s : stable_ntk_eta(x_s);
  NtkTrainOptions pre_opt;
  pre_opt.record_every = 0;
  pre_opt.stop_mse = opt.pretrain_tol;
  auto [pre_net, pre_rep] = gd_train_relu(init, x_s, y_s, eta_s, opt.pretrain_max_iters, pre_opt);
  const double n_s = static_cast<double>(x_s.rows());
  out.pretrain_mse = (relu_predict(pre_net, x_s) - y_s).squaredNorm() / n_s;
  out.pretrain_iterations = pre_rep.iterations;
  if (!(out.pretrain_mse <= opt.pretrain_tol)) {
    std::ostringstream os;
    os << "pretrain_then_finetune: source MSE " << out.pretrain_mse << " above " << opt.pretrain_tol
       << " after " << opt.pretrain_max_iters << " iterations";
    throw pretraining_error(os.str());
  }

  const NtkGram h_inf = ntk_gram_infinite(x);
  const double eta_t = opt.eta_t > 0.0 ? opt.eta_t : 1.0 / spectral_norm_sym(h_inf.H);
  out.y_tilde = y - relu_predict(pre_net, x);
  const long iters = opt.finetune_iters > 0
                         ? opt.finetune_iters
                         : default_ntk_iters(eta_t, h_inf.lambda_min, out.y_tilde.norm());
  NtkTrainOptions ft_opt;
  ft_opt.record_every = opt.record_every;
  ft_opt.gram_every = opt.gram_every;
  auto [ft_net, ft_rep] = gd_train_relu(pre_net, x, y, eta_t, iters, ft_opt);
  ft_rep.bounds = ntk_generalization_bounds(h_inf, out.y_tilde, opt.theta_s, opt.theta_t, opt.delta);
  out.report = std::move(ft_rep);
  out.pretrained = std::move(pre_net);
  out.finetuned = std::move(ft_net);
  return out;
}

}  // namespace ftlab
