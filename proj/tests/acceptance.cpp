// Acceptance checks. `acceptance N` runs criterion N, `acceptance all` runs
// every one. Each prints a single PASS / FAIL / SKIP line.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ftlab/ftlab.hpp"
#include "ftlab/harness/config.hpp"
#include "ftlab/harness/experiments.hpp"
#include "ftlab/harness/mnist_correlation.hpp"
#include "ftlab/harness/stats.hpp"

using namespace ftlab;
namespace fh = ftlab::harness;

namespace {

constexpr int kSkip = 77;

struct Outcome {
  int status = 1;  // 0 pass, 1 fail, kSkip
  std::string detail;
};

Outcome pass(std::string d) { return {0, std::move(d)}; }
Outcome fail(std::string d) { return {1, std::move(d)}; }
Outcome verdict(bool ok, std::string d) { return {ok ? 0 : 1, std::move(d)}; }

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[200];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Vector unit(Eigen::Index d, Rng& rng) { return random_unit_vector(d, rng); }

// theta_S + X^T (X X^T)^{-1} X (theta_T - theta_S), no SVD
Vector normal_equation_target(const Matrix& x, const Vector& ts, const Vector& tt) {
  const Matrix g = x * x.transpose();
  return ts + x.transpose() * g.ldlt().solve(x * (tt - ts));
}

// ---------------------------------------------------------------- 1

Outcome c1_linear_inductive_bias() {
  Rng meta = make_rng(derive_seed(1, 0));
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Eigen::Index d = std::uniform_int_distribution<Eigen::Index>(5, 50)(meta);
    const Eigen::Index n_max = (3 * d + 3) / 4;
    const Eigen::Index n = std::uniform_int_distribution<Eigen::Index>(1, n_max)(meta);
    const Matrix x = sample(identity_design(d), n, derive_seed(1, 100 + s));
    Rng rng = make_rng(derive_seed(1, 200 + s));
    const Vector ts = gaussian_vector(d, rng), tt = gaussian_vector(d, rng);
    const LinearFtResult r = gd_finetune_linear(x, x * tt, ts, default_linear_step(x), 1e-20, 1000000);
    const Vector want = normal_equation_target(x, ts, tt);
    worst = std::max(worst, (r.gamma - want).norm() / want.norm());
  }
  return verdict(worst <= 1e-6, fmt("100 instances, worst relative error %.2e (limit 1e-6)", worst));
}

// ---------------------------------------------------------------- 2

Outcome c2_bound_chain() {
  int violations = 0;
  double min_slack = std::numeric_limits<double>::infinity();
  // fig1 preset: 100 draws over both task modes and a range of n
  const std::vector<Eigen::Index> ns = {10, 50, 100, 200, 400, 600, 800, 900};
  const Fig1Preset p;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const GaussianDesign g = make_design(p.spectrum(), derive_seed(2, s));
    TaskPairSpec spec;
    spec.mode = s % 2 ? TaskMode::bottom_eigen_align : TaskMode::top_eigen_align;
    spec.m = p.m;
    spec.seed = derive_seed(2, 1000 + s);
    const TaskPair tp = make_task_pair(spec, g);
    const Matrix x = sample(g, ns[s % ns.size()], derive_seed(2, 2000 + s));
    const double risk =
        population_risk_linear(closed_form_linear(projectors_from_rows(x), tp.theta_s, tp.theta_t), tp.theta_t, g);
    const double bound = risk_upper_bound_empirical(g.eig, x, tp.theta_s, tp.theta_t, p.m).empirical_bound;
    if (!(bound >= risk)) ++violations;
    min_slack = std::min(min_slack, bound - risk);
  }
  // Sigma = I: random d, n, k and random task pairs
  Rng meta = make_rng(derive_seed(2, 1));
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Eigen::Index d = std::uniform_int_distribution<Eigen::Index>(5, 60)(meta);
    const Eigen::Index n = std::uniform_int_distribution<Eigen::Index>(1, d - 1)(meta);
    const Eigen::Index k = std::uniform_int_distribution<Eigen::Index>(1, d)(meta);
    const GaussianDesign g = identity_design(d);
    Rng rng = make_rng(derive_seed(2, 3000 + s));
    const Vector ts = gaussian_vector(d, rng), tt = gaussian_vector(d, rng);
    const Matrix x = sample(g, n, derive_seed(2, 4000 + s));
    const double risk = population_risk_linear(closed_form_linear(projectors_from_rows(x), ts, tt), tt, g);
    const double bound = risk_upper_bound_empirical(g.eig, x, ts, tt, k).empirical_bound;
    if (!(bound >= risk)) ++violations;
    min_slack = std::min(min_slack, bound - risk);
  }
  return verdict(violations == 0,
                 fmt("200 draws, %g violations, smallest bound - risk = %.3e", violations, min_slack));
}

// ---------------------------------------------------------------- 3

Outcome c3_fig1_direction() {
  fh::Config cfg;
  cfg.set("seeds", "25");
  cfg.set("bounds", "0");
  cfg.set("n_grid", "10,50,100,200,400,600");
  const fh::ResultTable t = fh::run_fig1(cfg);
  const double top10 = fh::mean(t.values("top-eigen-align", "risk", 10, 1));
  const double bot10 = fh::mean(t.values("bottom-eigen-align", "risk", 10, 1));
  double best_bottom = std::numeric_limits<double>::infinity();
  long long best_n = 0;
  for (auto n : cfg.get_ints("n_grid", {})) {
    const double m = fh::mean(t.values("bottom-eigen-align", "risk", n, 1));
    if (m < best_bottom) {
      best_bottom = m;
      best_n = n;
    }
  }
  const bool small_n = top10 < bot10;
  const bool vanishes = best_bottom < 1e-6;
  return verdict(small_n && vanishes,
                 fmt("n=10 mean risk top %.4f vs bottom %.4f; ", top10, bot10) +
                     fmt("smallest bottom-align mean risk %.3e at n=%g (needs < 1e-6)", best_bottom,
                         static_cast<double>(best_n)));
}

// ---------------------------------------------------------------- 4

Outcome c4_deep_fixed_point() {
  const Eigen::Index d = 10, n = 3;
  const double eta = 1e-3;
  double worst_rel = 0.0, worst_drift = 0.0;
  double ratio_lo = std::numeric_limits<double>::infinity(), ratio_hi = 0.0;
  for (int depth : {2, 3, 5}) {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const Matrix x = sample(identity_design(d), n, derive_seed(4, s));
      Rng rng = make_rng(derive_seed(4, 100 + s));
      const Vector ts = unit(d, rng);
      const Vector tt = ts + 0.2 * unit(d, rng);
      const DeepLinearNet net = balanced_init_from_teacher(ts, depth, {}, derive_seed(4, 200 + s));
      DeepGdOptions opt;
      opt.eta = eta;
      const DeepFtResult r = gd_finetune_deep(net, x, x * tt, opt);
      const Vector fp = fixed_point_predictor(projectors_from_rows(x), ts, tt, depth);
      worst_rel = std::max(worst_rel, (r.beta - fp).norm() / fp.norm());
      const double drift = balancedness_residual(r.net_final);
      worst_drift = std::max(worst_drift, drift);

      // same physical time at eta / 2
      DeepGdOptions half = opt;
      half.eta = eta / 2.0;
      half.fixed_steps = true;
      half.max_iters = 2 * r.iterations;
      const double drift_half = balancedness_residual(gd_finetune_deep(net, x, x * tt, half).net_final);
      const double ratio = drift_half / drift;
      ratio_lo = std::min(ratio_lo, ratio);
      ratio_hi = std::max(ratio_hi, ratio);
    }
  }
  const bool ok = worst_rel <= 1e-3 && worst_drift <= 1e-4 && ratio_lo >= 0.45 && ratio_hi <= 0.55;
  return verdict(ok, fmt("60 runs, worst GD vs fixed point %.2e, worst drift %.2e, ", worst_rel, worst_drift) +
                         fmt("drift ratio at eta/2 in [%.3f, %.3f]", ratio_lo, ratio_hi));
}

// ---------------------------------------------------------------- 5

Outcome c5_scaled_tasks() {
  const Eigen::Index d = 100, n = 10;
  double worst_inf = 0.0, worst_rel = 0.0;
  for (double alpha : {2.0, 5.0}) {
    for (std::uint64_t s = 0; s < 10; ++s) {
      std::vector<double> spectrum(static_cast<std::size_t>(d));
      for (Eigen::Index i = 0; i < d; ++i) spectrum[static_cast<std::size_t>(i)] = 1.0 / (1.0 + 0.1 * static_cast<double>(i));
      const GaussianDesign g = make_design(spectrum, derive_seed(5, s));
      TaskPairSpec spec;
      spec.mode = TaskMode::scaled_aligned;
      spec.alpha = alpha;
      spec.noise_ratio = 0.0;
      spec.seed = derive_seed(5, 100 + s);
      const TaskPair tp = make_task_pair(spec, g);
      const Matrix x = sample(g, n, derive_seed(5, 200 + s));
      const ProjectorPair p = projectors_from_rows(x);
      worst_inf = std::max(worst_inf, deep_population_risk(p, tp.theta_s, tp.theta_t, g));
      const double l1 = population_risk_linear(closed_form_linear(p, tp.theta_s, tp.theta_t), tp.theta_t, g);
      // ((alpha - 1) / alpha)^2 ||Sigma^{1/2} P_perp theta_T||^2 with an explicit square root
      const Matrix root = g.eig.V * g.eig.lambda.cwiseSqrt().asDiagonal() * g.eig.V.transpose();
      const double want = std::pow((alpha - 1.0) / alpha, 2) * (root * p.perp(tp.theta_t)).squaredNorm();
      worst_rel = std::max(worst_rel, std::abs(l1 - want) / want);
    }
  }
  return verdict(worst_inf <= 1e-10 && worst_rel <= 1e-9,
                 fmt("20 instances, worst infinite-depth risk %.2e, worst depth-1 formula error %.2e", worst_inf,
                     worst_rel));
}

// ---------------------------------------------------------------- 6

Outcome c6_frozen() {
  fh::Config cfg;
  const fh::ResultTable t = fh::run_frozen_experiment(cfg);
  const auto d = cfg.get_int("d", 0);
  const long long n_lo = d / 10, n_hi = d / 2;
  double min_cos = 1.0;
  for (auto n : {n_lo, n_hi}) {
    for (double c : t.values("frozen", "abs_cos_source", n, 2)) min_cos = std::min(min_cos, c);
  }
  const double fz_lo = fh::median(t.values("frozen", "risk", n_lo, 2));
  const double fz_hi = fh::median(t.values("frozen", "risk", n_hi, 2));
  const double ft_hi = fh::median(t.values("finetune", "risk", n_hi, 2));
  const double variation = std::abs(fz_hi - fz_lo) / std::min(fz_lo, fz_hi);
  const double ratio = ft_hi / fz_hi;
  const bool ok = min_cos >= 0.999 && variation < 0.10 && ratio < 0.10;
  return verdict(ok, fmt("min |cos| %.6f, frozen median risk varies %.1f%% between n=d/10 and d/2, ", min_cos,
                         100.0 * variation) +
                         fmt("finetune / frozen at d/2 = %.1f%%", 100.0 * ratio));
}

// ---------------------------------------------------------------- 7

Outcome c7_source_scale() {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix x = sample(identity_design(100), 10, derive_seed(7, s));
    const ProjectorPair p = projectors_from_rows(x);
    Rng rng = make_rng(derive_seed(7, 100 + s));
    const Vector ts = gaussian_vector(100, rng), tt = gaussian_vector(100, rng);
    const Vector a = infinite_depth_predictor(p, ts, tt);
    const Vector b = infinite_depth_predictor(p, Vector(10.0 * ts), tt);
    worst = std::max(worst, (a - b).norm() / a.norm());
  }
  fh::Config cfg;
  cfg.set("alphas", "1,10");
  cfg.set("gd", "0");
  const fh::ResultTable t = fh::run_scaling_experiment(cfg);
  const double r1 = fh::median(t.values("target,alpha=1", "risk_infinite_depth", 10, 0));
  const double r10 = fh::median(t.values("target,alpha=10", "risk_infinite_depth", 10, 0));
  return verdict(worst <= 1e-12 && r10 >= 10.0 * r1,
                 fmt("worst relative change under 10x source %.2e; target-scaled median risk grows %.1fx", worst,
                     r10 / r1));
}

// ---------------------------------------------------------------- 8

Outcome c8_ntk_kernel() {
  const Eigen::Index n = 10, d = 5;
  const long samples = 1000000;
  Rng xr = make_rng(derive_seed(8, 0));
  const Matrix x = normalize_rows(gaussian_matrix(n, d, xr));
  const NtkGram g = ntk_gram_infinite(x);
  bool diag_exact = true;
  for (Eigen::Index i = 0; i < n; ++i) diag_exact = diag_exact && g.H(i, i) == 0.5;

  int checked = 0, outside = 0;
  double worst_z = 0.0;
  std::normal_distribution<double> nd;
  for (Eigen::Index i = 0; i < n && checked < 50; ++i) {
    for (Eigen::Index j = i; j < n && checked < 50; ++j) {
      Rng rng = make_rng(derive_seed(8, 1000 + static_cast<std::uint64_t>(checked)));
      const double ip = x.row(i).dot(x.row(j));
      long hits = 0;
      Vector w(d);
      for (long s = 0; s < samples; ++s) {
        for (Eigen::Index k = 0; k < d; ++k) w(k) = nd(rng);
        if (x.row(i).dot(w) >= 0.0 && x.row(j).dot(w) >= 0.0) ++hits;
      }
      const double p = static_cast<double>(hits) / static_cast<double>(samples);
      const double est = ip * p;
      const double se = std::abs(ip) * std::sqrt(p * (1.0 - p) / static_cast<double>(samples));
      const double z = se > 0.0 ? std::abs(est - g.H(i, j)) / se : (est == g.H(i, j) ? 0.0 : 1e300);
      worst_z = std::max(worst_z, z);
      if (z > 3.0) ++outside;
      ++checked;
    }
  }
  return verdict(diag_exact && outside == 0 && checked == 50,
                 fmt("%g entries, %g outside 3 SE (worst %.2f SE); ", checked, outside, worst_z) +
                     (diag_exact ? "diagonal exactly 1/2" : "diagonal NOT exactly 1/2"));
}

// ---------------------------------------------------------------- 9

Outcome c9_ntk_regime() {
  fh::Config cfg;
  cfg.set("finetune", "0");
  const fh::ResultTable t = fh::run_ntk_experiment(cfg);
  const auto widths = cfg.get_ints("widths", {});
  const auto n = cfg.get_int("n", 0);
  std::vector<double> gram, weight;
  for (auto m : widths) {
    gram.push_back(fh::median(t.values("scratch", "gram_drift", n, m)));
    weight.push_back(fh::median(t.values("scratch", "weight_drift_max", n, m)));
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < widths.size(); ++i) decreasing = decreasing && gram[i] < gram[i - 1] && weight[i] < weight[i - 1];
  double worst_curve = 0.0;
  for (double v : t.values("scratch", "curve_deviation_rel", n, widths.back())) worst_curve = std::max(worst_curve, v);
  std::string detail = "median gram drift";
  for (double v : gram) detail += fmt(" %.3g", v);
  detail += ", median weight drift";
  for (double v : weight) detail += fmt(" %.3g", v);
  detail += fmt("; worst curve deviation at m=%g is %.4f of ||y_tilde||", static_cast<double>(widths.back()),
                worst_curve);
  return verdict(decreasing && worst_curve <= 0.05, detail);
}

// ---------------------------------------------------------------- 10

Outcome c10_ntk_bounds() {
  const Eigen::Index n = 10, d = 5;
  int quad_violations = 0, crossover_mismatch = 0, beats = 0;
  double worst_ratio = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng rng = make_rng(derive_seed(10, s));
    const Matrix x = normalize_rows(gaussian_matrix(n, d, rng));
    const NtkGram g = ntk_gram_infinite(x);
    const Vector tt = unit(d, rng);
    // distances spread across the crossover at ||theta_T|| / sqrt(2)
    const double dist = 0.05 + 1.5 * static_cast<double>(s) / 49.0;
    const Vector ts = tt + dist * unit(d, rng);
    const Vector delta = tt - ts;
    const double q = std::sqrt(quad_form_inverse(g.H, Vector(x * delta)));
    worst_ratio = std::max(worst_ratio, q / delta.norm());
    if (!(q <= 3.0 * delta.norm())) ++quad_violations;
    const NtkBounds b = ntk_generalization_bounds(g, x * delta, ts, tt);
    const bool predicted = finetune_beats_random(ts, tt);
    const bool direct = 6.0 * delta.norm() < 3.0 * std::sqrt(2.0) * tt.norm();
    if ((*b.linear_corollary_bound < *b.random_init_bound) != direct || predicted != direct) ++crossover_mismatch;
    beats += direct;
  }
  return verdict(quad_violations == 0 && crossover_mismatch == 0,
                 fmt("50 instances, max sqrt(y^T H^-1 y) / ||dtheta|| = %.3f (limit 3), ", worst_ratio) +
                     fmt("%g crossover mismatches, finetune wins on %g", crossover_mismatch, beats));
}

// ---------------------------------------------------------------- 11

Outcome c11_mnist() {
  const auto dir = fh::mnist_dir_from_env();
  if (!dir || !fh::mnist_files_present(*dir)) {
    return {kSkip, "MNIST not found; set FINETUNE_LAB_DATA to a directory with the four IDX files"};
  }
  const fh::MnistData data = fh::load_mnist_dir(*dir);
  fh::Config cfg;
  cfg.set("n_grid", "10,20");
  const fh::ResultTable t = fh::run_mnist_correlation(cfg, data);
  std::string detail;
  bool ok = true;
  for (long long n : {10LL, 20LL}) {
    const auto ours = t.values("ours_m2", "r_squared", n, 0);
    const auto dist = t.values("distance_sq", "r_squared", n, 0);
    int wins = 0;
    for (std::size_t i = 0; i < ours.size(); ++i) wins += ours[i] > dist[i];
    ok = ok && wins >= 8 && ours.size() == 10;
    detail += fmt("n=%g: bound wins %g of 10", static_cast<double>(n), wins) +
              fmt(" (mean R^2 %.3f vs %.3f); ", fh::mean(ours), fh::mean(dist));
  }
  return verdict(ok, detail);
}

struct Criterion {
  const char* title;
  double budget_s;
  std::function<Outcome()> run;
};

const std::map<int, Criterion>& criteria() {
  static const std::map<int, Criterion> all = {
      {1, {"linear fine-tuning converges to the projector formula", 10, c1_linear_inductive_bias}},
      {2, {"deterministic risk bound dominates the exact risk", 60, c2_bound_chain}},
      {3, {"fig1 direction (top vs bottom alignment)", 300, c3_fig1_direction}},
      {4, {"deep GD matches the fixed-point predictor", 300, c4_deep_fixed_point}},
      {5, {"scaled tasks: infinite depth is exact, depth 1 follows its formula", 10, c5_scaled_tasks}},
      {6, {"frozen first layer is stuck on the source direction", 300, c6_frozen}},
      {7, {"infinite-depth predictor ignores source scale, not target scale", 60, c7_source_scale}},
      {8, {"closed-form NTK kernel vs Monte-Carlo", 120, c8_ntk_kernel}},
      {9, {"NTK regime: drift shrinks with width, loss follows the spectral curve", 600, c9_ntk_regime}},
      {10, {"NTK bound relations", 60, c10_ntk_bounds}},
      {11, {"MNIST: bound correlates better than task distance", 1200, c11_mnist}},
  };
  return all;
}

int run_one(int id) {
  const Criterion& c = criteria().at(id);
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = c.run();
  } catch (const std::exception& e) {
    o = fail(std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (o.status != kSkip && secs > c.budget_s) {
    o.status = 1;
    o.detail += fmt(" [runtime %.0f s over budget %.0f s]", secs, c.budget_s);
  }
  const char* tag = o.status == 0 ? "PASS" : o.status == kSkip ? "SKIP" : "FAIL";
  std::printf("%s criterion %d: %s -- %s (%.1f s)\n", tag, id, c.title, o.detail.c_str(), secs);
  std::fflush(stdout);
  return o.status;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: acceptance <1-11|all>\n");
    return 2;
  }
  const std::string arg = argv[1];
  if (arg == "all") {
    int failed = 0;
    for (const auto& [id, c] : criteria()) failed += run_one(id) == 1;
    return failed == 0 ? 0 : 1;
  }
  int id = 0;
  try {
    id = std::stoi(arg);
  } catch (const std::exception&) {
    id = 0;
  }
  if (criteria().count(id) == 0) {
    std::fprintf(stderr, "unknown criterion '%s'\n", arg.c_str());
    return 2;
  }
  return run_one(id);
}
