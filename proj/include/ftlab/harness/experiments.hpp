#pragma once

// Synthetic experiment runners. Each reads its parameters from a Config
// (recording defaults), loops over seeds and returns a sorted ResultTable.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "ftlab/datasets.hpp"
#include "ftlab/deep_linear.hpp"
#include "ftlab/error.hpp"
#include "ftlab/harness/config.hpp"
#include "ftlab/harness/result_table.hpp"
#include "ftlab/linalg.hpp"
#include "ftlab/linear_ft.hpp"
#include "ftlab/ntk.hpp"
#include "ftlab/random.hpp"

namespace ftlab::harness {

// Raised by --verify when an inline oracle check fails.
class verification_error : public error {
 public:
  using error::error;
};

inline void check(bool ok, const std::string& what) {
  if (!ok) throw verification_error("verify: " + what);
}

inline std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline std::vector<std::uint64_t> seeds_from(Config& cfg, long long default_count) {
  const auto base = cfg.get_int("seed", 0);
  const auto count = cfg.get_int("seeds", default_count);
  if (count < 1) throw invalid_argument("seeds must be >= 1");
  if (base < 0) throw invalid_argument("seed must be >= 0");
  std::vector<std::uint64_t> out;
  for (long long i = 0; i < count; ++i) out.push_back(static_cast<std::uint64_t>(base + i));
  return out;
}

inline void finish(ResultTable& t, const Config& cfg) {
  t.metadata["experiment"] = t.experiment;
  t.metadata["config_hash"] = cfg.hash();
  t.metadata["artifact_version"] = kArtifactVersion;
  t.sort();
}

inline double rel_diff(const Vector& a, const Vector& b) { return (a - b).norm() / (1.0 + b.norm()); }

// ---------------------------------------------------------------- fig1

inline ResultTable run_fig1(Config& cfg, bool verify = false) {
  Fig1Preset p;
  p.d = cfg.get_int("d", p.d);
  p.m = cfg.get_int("m", p.m);
  p.top = cfg.get_double("top", p.top);
  p.bottom = cfg.get_double("bottom", p.bottom);
  const auto grid = cfg.get_ints("n_grid", {10, 50, 100, 200, 400, 600, 800, 1000});
  const double diff_norm = cfg.get_double("diff_norm", 1.0);
  const double source_norm = cfg.get_double("source_norm", 1.0);
  const auto k_cfg = cfg.get_int("k", 0);  // 0: spectral-gap heuristic
  const double rho = cfg.get_double("rho", 0.5);
  const double c = cfg.get_double("c", 1.0);
  const double delta = cfg.get_double("delta", 1.0);
  const bool bounds = cfg.get_bool("bounds", true);
  const auto seeds = seeds_from(cfg, 25);
  for (auto n : grid) {
    if (n < 1 || n > p.d) throw invalid_argument("fig1: every n must lie in [1, d]");
  }

  ResultTable t;
  t.experiment = "fig1";
  for (auto s : seeds) {
    const GaussianDesign design = make_design(p.spectrum(), derive_seed(s, 0));
    const Eigen::Index k = k_cfg > 0 ? k_cfg : select_k_heuristic(design.eig, rho);
    const Matrix sigma = bounds ? design.covariance() : Matrix();
    TaskPairSpec spec;
    spec.m = p.m;
    spec.diff_norm = diff_norm;
    spec.source_norm = source_norm;
    spec.mode = TaskMode::top_eigen_align;
    spec.seed = derive_seed(s, 1);
    const TaskPair top = make_task_pair(spec, design);
    spec.mode = TaskMode::bottom_eigen_align;
    spec.seed = derive_seed(s, 2);
    const TaskPair bottom = make_task_pair(spec, design);

    for (auto n : grid) {
      const Matrix x = sample(design, n, derive_seed(s, 100 + static_cast<std::uint64_t>(n)));
      const ProjectorPair proj = projectors_from_rows(x);
      const double gap = bounds ? sigma_gap(sigma, x) : 0.0;
      for (const auto& [name, pair] : {std::pair{"top-eigen-align", &top}, std::pair{"bottom-eigen-align", &bottom}}) {
        const Vector gamma = closed_form_linear(proj, pair->theta_s, pair->theta_t);
        const double risk = population_risk_linear(gamma, pair->theta_t, design);
        t.add(s, n, 1, name, "risk", risk);
        if (bounds) {
          const BoundReport emp = risk_upper_bound_from_gap(design.eig, gap, pair->theta_s, pair->theta_t, k);
          const BoundReport con =
              risk_upper_bound_concentration(design.eig, n, delta, c, pair->theta_s, pair->theta_t, k);
          t.add(s, n, 1, name, "empirical_bound", emp.empirical_bound);
          t.add(s, n, 1, name, "concentration_bound", con.concentration_bound);
          t.add(s, n, 1, name, "sigma_gap", gap);
          t.add(s, n, 1, name, "g", con.g_value);
          if (verify) check(emp.empirical_bound >= risk * (1.0 - 1e-12), "fig1: empirical bound below risk");
        }
        if (verify) {
          const Vector dperp = proj.perp(Vector(pair->theta_t - pair->theta_s));
          const double identity = design.eig.quadratic_form(dperp);
          check(std::abs(identity - risk) <= 1e-9 * std::max(1.0, risk), "fig1: risk identity");
          check(proj.perp(Vector(gamma - pair->theta_s)).norm() <= 1e-8, "fig1: span property");
        }
      }
    }
  }
  finish(t, cfg);
  return t;
}

// ---------------------------------------------------------------- depth

inline ResultTable run_depth_experiment(Config& cfg, bool verify = false) {
  const auto d = cfg.get_int("d", 100);
  const auto n = cfg.get_int("n", d / 10);
  const auto alphas = cfg.get_doubles("alphas", {1, 2, 5});
  const auto depths = cfg.get_ints("depths", {1, 2, 3, 5, 10, 100000});
  const double noise = cfg.get_double("noise_ratio", 0.5);
  const bool gd = cfg.get_bool("gd", false);
  const auto gd_max_depth = cfg.get_int("gd_max_depth", 5);
  const auto gd_max_iters = cfg.get_int("gd_max_iters", 2000000);
  // discretization error of GD vs. the flow limit scales with the step
  const double gd_step_factor = cfg.get_double("gd_step_factor", 0.1);
  const auto seeds = seeds_from(cfg, 25);
  if (n < 1 || n >= d) throw invalid_argument("depth: need 1 <= n < d");

  ResultTable t;
  t.experiment = "depth";
  const GaussianDesign design = identity_design(d);
  for (auto s : seeds) {
    const Matrix x = sample(design, n, derive_seed(s, 2));
    const ProjectorPair proj = projectors_from_rows(x);
    for (double alpha : alphas) {
      TaskPairSpec spec;
      spec.mode = TaskMode::scaled_aligned;
      spec.alpha = alpha;
      spec.noise_ratio = noise;
      spec.seed = derive_seed(s, 1);
      const TaskPair tp = make_task_pair(spec, design);
      const std::string variant = "alpha=" + fmt_g(alpha);
      const Vector y = x * tp.theta_t;
      for (auto L : depths) {
        const FixedPointSolution fp = fixed_point_solve(proj, tp.theta_s, tp.theta_t, static_cast<int>(L));
        const double risk = population_risk_linear(fp.beta, tp.theta_t, design);
        t.add(s, n, L, variant, "risk", risk);
        if (verify) {
          const double scale = std::max(1.0, fp.norm * fp.norm);
          check(std::abs(fp.residual) <= 1e-9 * scale, "depth: fixed-point residual");
          check((proj.parallel(fp.beta) - proj.parallel(tp.theta_t)).norm() <= 1e-9 * (1.0 + tp.theta_t.norm()),
                "depth: parallel part interpolates");
        }
        if (gd && L >= 2 && L <= gd_max_depth) {
          const DeepLinearNet net = balanced_init_from_teacher(tp.theta_s, static_cast<int>(L), {}, derive_seed(s, 3));
          DeepGdOptions opt;
          opt.eta = gd_step_factor *
                    default_deep_step(x, static_cast<int>(L), 1.5 * std::max(tp.theta_s.norm(), tp.theta_t.norm()));
          opt.max_iters = gd_max_iters;
          const DeepFtResult res = gd_finetune_deep(net, x, y, opt);
          t.add(s, n, L, variant, "risk_gd", population_risk_linear(res.beta, tp.theta_t, design));
          if (verify) check(rel_diff(res.beta, fp.beta) <= 1e-3, "depth: GD vs fixed point");
        }
      }
      const double risk_inf = deep_population_risk(proj, tp.theta_s, tp.theta_t, design);
      t.add(s, n, 0, variant, "risk_infinite_depth", risk_inf);
      if (verify) {
        const Vector b = infinite_depth_predictor(proj, tp.theta_s, tp.theta_t);
        const double generic = population_risk_linear(b, tp.theta_t, design);
        check(std::abs(generic - risk_inf) <= 1e-9 * std::max(1.0, generic), "depth: closed-form risk of the infinite-depth predictor");
      }
    }
  }
  finish(t, cfg);
  return t;
}

// ---------------------------------------------------------------- scaling

inline ResultTable run_scaling_experiment(Config& cfg, bool verify = false) {
  const auto d = cfg.get_int("d", 100);
  const auto n = cfg.get_int("n", d / 10);
  const auto depth = static_cast<int>(cfg.get_int("depth", 7));
  const auto alphas = cfg.get_doubles("alphas", {1, 2, 5, 10});
  const double alignment = cfg.get_double("alignment", 0.1);
  const bool gd = cfg.get_bool("gd", true);
  const auto gd_max_iters = cfg.get_int("gd_max_iters", 2000000);
  const auto seeds = seeds_from(cfg, 10);
  if (n < 1 || n >= d) throw invalid_argument("scaling: need 1 <= n < d");

  ResultTable t;
  t.experiment = "scaling";
  const GaussianDesign design = identity_design(d);
  for (auto s : seeds) {
    const Matrix x = sample(design, n, derive_seed(s, 2));
    const ProjectorPair proj = projectors_from_rows(x);
    for (ScaleSide side : {ScaleSide::source, ScaleSide::target}) {
      for (double alpha : alphas) {
        TaskPairSpec spec;
        spec.mode = TaskMode::direction_fixed_scale;
        spec.alpha = alpha;
        spec.side = side;
        spec.alignment = alignment;
        spec.seed = derive_seed(s, 1);
        const TaskPair tp = make_task_pair(spec, design);
        const std::string variant = to_string(side) + ",alpha=" + fmt_g(alpha);
        const Vector b_inf = infinite_depth_predictor(proj, tp.theta_s, tp.theta_t);
        const Vector b_fp = fixed_point_predictor(proj, tp.theta_s, tp.theta_t, depth);
        t.add(s, n, 0, variant, "risk_infinite_depth", population_risk_linear(b_inf, tp.theta_t, design));
        t.add(s, n, depth, variant, "risk_fixed_point", population_risk_linear(b_fp, tp.theta_t, design));
        if (gd) {
          const DeepLinearNet net = balanced_init_from_teacher(tp.theta_s, depth, {}, derive_seed(s, 3));
          DeepGdOptions opt;
          opt.eta = default_deep_step(x, depth, 1.5 * std::max(tp.theta_s.norm(), tp.theta_t.norm()));
          opt.max_iters = gd_max_iters;
          const DeepFtResult res = gd_finetune_deep(net, x, x * tp.theta_t, opt);
          t.add(s, n, depth, variant, "risk_gd", population_risk_linear(res.beta, tp.theta_t, design));
        }
        if (verify && side == ScaleSide::source) {
          const Vector b_unit = infinite_depth_predictor(proj, tp.theta_s / tp.theta_s.norm(), tp.theta_t);
          check((b_inf - b_unit).norm() <= 1e-12 * b_unit.norm(), "scaling: source-scale invariance");
        }
      }
    }
  }
  finish(t, cfg);
  return t;
}

// ---------------------------------------------------------------- frozen

inline std::vector<double> spiked_spectrum(Eigen::Index d, Eigen::Index top_count, double top, double bottom) {
  std::vector<double> s(static_cast<std::size_t>(d), bottom);
  std::fill(s.begin(), s.begin() + top_count, top);
  return s;
}

inline ResultTable run_frozen_experiment(Config& cfg, bool verify = false) {
  const auto d = cfg.get_int("d", 100);
  const auto top_count = cfg.get_int("top_count", 10);
  const double top = cfg.get_double("top", 1.0);
  const double bottom = cfg.get_double("bottom", 0.005);
  const double rel = cfg.get_double("task_distance", 0.5);
  const auto grid = cfg.get_ints("n_grid", {d / 10, d / 2});
  const auto source_n = cfg.get_int("source_n", 2 * d);
  const double kappa = cfg.get_double("kappa", 1e-4);
  const auto max_iters = cfg.get_int("max_iters", 2000000);
  const auto frozen_iters = cfg.get_int("frozen_iters", 50000);
  const double tol = cfg.get_double("tol", 1e-10);
  const auto seeds = seeds_from(cfg, 10);
  for (auto n : grid) {
    if (n < 1 || n > d) throw invalid_argument("frozen: every n must lie in [1, d]");
  }
  if (top_count < 0 || top_count > d) throw invalid_argument("frozen: top_count outside [0, d]");

  ResultTable t;
  t.experiment = "frozen";
  for (auto s : seeds) {
    const GaussianDesign design = make_design(spiked_spectrum(d, top_count, top, bottom), derive_seed(s, 0));
    Rng task_rng = make_rng(derive_seed(s, 1));
    const Vector theta_s = random_unit_vector(d, task_rng);
    const Vector theta_t = theta_s + rel * random_unit_vector(d, task_rng);
    const double scale = 1.5 * std::max(theta_s.norm(), theta_t.norm());

    // Source pretraining from a small random init on isotropic source data.
    const Matrix x_s = sample(identity_design(d), source_n, derive_seed(s, 3));
    DeepGdOptions pre_opt;
    pre_opt.eta = default_deep_step(x_s, 2, scale);
    pre_opt.tol = tol;
    pre_opt.max_iters = max_iters;
    const DeepFtResult pre =
        gd_finetune_deep(small_random_init(d, 2, {}, kappa, derive_seed(s, 4)), x_s, x_s * theta_s, pre_opt);

    for (auto n : grid) {
      const Matrix x = sample(design, n, derive_seed(s, 100 + static_cast<std::uint64_t>(n)));
      const Vector y = x * theta_t;
      DeepGdOptions opt;
      opt.eta = default_deep_step(x, 2, scale);
      opt.tol = tol;
      opt.max_iters = max_iters;

      const DeepFtResult ft = gd_finetune_deep(pre.net_final, x, y, opt);
      const DeepFtResult vanilla = gd_finetune_deep(small_random_init(d, 2, {}, kappa, derive_seed(s, 5)), x, y, opt);
      DeepGdOptions frozen_opt = opt;
      frozen_opt.frozen_prefix = 1;
      frozen_opt.max_iters = frozen_iters;
      const DeepFtResult frozen = gd_finetune_deep(pre.net_final, x, y, frozen_opt);
      // same, but starting from the exact rank-1 factorization of theta_s
      const DeepFtResult frozen_b =
          gd_finetune_deep(balanced_init_from_teacher(theta_s, 2, {}, derive_seed(s, 6)), x, y, frozen_opt);

      auto abs_cos = [&](const Vector& b) { return std::abs(b.dot(theta_s)) / (b.norm() * theta_s.norm()); };
      const double cos_frozen = abs_cos(frozen.beta);
      t.add(s, n, 2, "finetune", "risk", population_risk_linear(ft.beta, theta_t, design));
      t.add(s, n, 2, "vanilla", "risk", population_risk_linear(vanilla.beta, theta_t, design));
      t.add(s, n, 2, "frozen", "risk", population_risk_linear(frozen.beta, theta_t, design));
      t.add(s, n, 2, "frozen", "abs_cos_source", cos_frozen);
      t.add(s, n, 2, "frozen", "train_mse", frozen.final_train_loss);
      t.add(s, n, 2, "frozen-balanced", "risk", population_risk_linear(frozen_b.beta, theta_t, design));
      t.add(s, n, 2, "frozen-balanced", "abs_cos_source", abs_cos(frozen_b.beta));
      t.add(s, n, 2, "pretrained", "source_fit_error", (pre.beta - theta_s).norm());
      if (verify) {
        check(frozen.net_final.layers[0] == pre.net_final.layers[0], "frozen: first layer changed");
        check(cos_frozen >= 0.999, "frozen: |cos(beta, theta_s)| = " + fmt_g(cos_frozen) + " below 0.999");
        const ProjectorPair proj = projectors_from_rows(x);
        check((proj.parallel(ft.beta) - proj.parallel(theta_t)).norm() <= 1e-3, "frozen: fine-tune interpolates");
      }
    }
  }
  finish(t, cfg);
  return t;
}

// ---------------------------------------------------------------- ntk

inline Matrix unit_rows(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return normalize_rows(gaussian_matrix(n, d, rng));
}

inline ResultTable run_ntk_experiment(Config& cfg, bool verify = false) {
  const auto n = cfg.get_int("n", 10);
  const auto d = cfg.get_int("d", 5);
  const auto widths = cfg.get_ints("widths", {100, 1000, 10000});
  const double kappa = cfg.get_double("kappa", 1.0);
  const double eta_cfg = cfg.get_double("eta", 0.0);  // 0: 1 / lambda_max(H_inf)
  const auto iters = cfg.get_int("iters", 2000);
  const auto curve_every = cfg.get_int("curve_every", 100);
  const double distance = cfg.get_double("task_distance", 0.1);
  const auto source_n = cfg.get_int("source_n", 4 * d);
  const double pretrain_tol = cfg.get_double("pretrain_tol", 1e-5);
  const bool finetune = cfg.get_bool("finetune", true);
  const auto seeds = seeds_from(cfg, 10);

  ResultTable t;
  t.experiment = "ntk";
  for (auto s : seeds) {
    const Matrix x = unit_rows(n, d, derive_seed(s, 0));
    const Matrix x_s = unit_rows(source_n, d, derive_seed(s, 1));
    TaskPairSpec spec;
    spec.mode = TaskMode::direction_fixed_scale;
    spec.alignment = distance;
    spec.seed = derive_seed(s, 2);
    const TaskPair tp = make_task_pair(spec, identity_design(d));
    const Vector y = x * tp.theta_t;
    const NtkGram h_inf = ntk_gram_infinite(x);
    const double eta = eta_cfg > 0.0 ? eta_cfg : 1.0 / spectral_norm_sym(h_inf.H);

    for (auto m : widths) {
      const ReluNtkNet net = init_relu_net(m, d, kappa, derive_seed(s, 3));
      NtkTrainOptions opt;
      opt.record_every = 1;
      const auto [trained, rep] = gd_train_relu(net, x, y, eta, iters, opt);
      const double yt = rep.y_tilde.norm();
      t.add(s, n, m, "scratch", "gram_drift_init", rep.gram_drift.front().value);
      t.add(s, n, m, "scratch", "gram_drift", rep.gram_drift.back().value);
      t.add(s, n, m, "scratch", "gram_change", rep.gram_change.back().value);
      t.add(s, n, m, "scratch", "weight_drift_max", rep.weight_drift_max);
      t.add(s, n, m, "scratch", "curve_deviation", rep.max_curve_deviation());
      t.add(s, n, m, "scratch", "curve_deviation_rel", yt > 0.0 ? rep.max_curve_deviation() / yt : 0.0);
      t.add(s, n, m, "scratch", "y_tilde_norm", yt);
      t.add(s, n, m, "scratch", "lambda0", rep.lambda0);
      t.add(s, n, m, "scratch", "final_residual", rep.loss_curve.back().value);
      for (std::size_t i = 0; i < rep.loss_curve.size(); ++i) {
        const long step = rep.loss_curve[i].step;
        if (curve_every > 0 && step % curve_every != 0) continue;
        t.add(s, step, m, "scratch-curve", "loss_curve", rep.loss_curve[i].value);
        t.add(s, step, m, "scratch-curve", "predicted_curve", rep.predicted_curve[i].value);
      }

      if (finetune) {
        PretrainFinetuneOptions po;
        po.m = m;
        po.kappa = kappa;
        po.seed = derive_seed(s, 3);
        po.pretrain_tol = pretrain_tol;
        po.theta_s = tp.theta_s;
        po.theta_t = tp.theta_t;
        const PretrainFinetuneResult pf = pretrain_then_finetune(x_s, x_s * tp.theta_s, x, y, po);
        const NtkBounds& b = *pf.report.bounds;
        const double pre_res = (relu_predict(pf.pretrained, x) - x * tp.theta_s).norm() / std::sqrt(static_cast<double>(n));
        t.add(s, n, m, "finetune", "finetune_bound", b.finetune_bound);
        t.add(s, n, m, "finetune", "log_term", b.log_term);
        t.add(s, n, m, "finetune", "linear_corollary_bound", *b.linear_corollary_bound);
        t.add(s, n, m, "finetune", "random_init_bound", *b.random_init_bound);
        t.add(s, n, m, "finetune", "y_tilde_norm", pf.y_tilde.norm());
        t.add(s, n, m, "finetune", "pretrain_residual", pre_res);
        t.add(s, n, m, "finetune", "final_residual", pf.report.loss_curve.back().value);
        if (verify) {
          const bool beats = finetune_beats_random(tp.theta_s, tp.theta_t);
          check(beats == (*b.linear_corollary_bound < *b.random_init_bound), "ntk: crossover condition");
        }
      }
      if (verify) {
        const double q = std::sqrt(quad_form_inverse(h_inf.H, Vector(x * (tp.theta_t - tp.theta_s))));
        check(q <= 3.0 * (tp.theta_t - tp.theta_s).norm(), "ntk: quadratic form above 3||dtheta||");
        check((h_inf.H.diagonal().array() == 0.5).all(), "ntk: H_inf diagonal");
      }
    }
  }
  finish(t, cfg);
  return t;
}

}  // namespace ftlab::harness
