#include <cmath>

#include <gtest/gtest.h>

#include "ftlab/datasets.hpp"
#include "ftlab/linear_ft.hpp"

using namespace ftlab;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Vector seeded_vector(Eigen::Index d, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return gaussian_vector(d, rng);
}

}  // namespace

TEST(GdLinear, StartsAtTarget) {
  const Matrix x = sample(identity_design(6), 3, 1);
  const Vector t = seeded_vector(6, 2);
  const LinearFtResult r = gd_finetune_linear(x, x * t, t);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_TRUE((r.gamma.array() == t.array()).all());
}

TEST(GdLinear, DeterminedSystem) {
  const Vector t = vec({1.0, -2.0, 0.5});
  const LinearFtResult r = gd_finetune_linear(Matrix::Identity(3, 3), t, Vector::Zero(3), 0.5, 1e-24);
  EXPECT_LT((r.gamma - t).norm(), 1e-5);
}

TEST(GdLinear, MatchesClosedForm) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Matrix x = sample(identity_design(20), 5, s);
    const Vector ts = seeded_vector(20, 100 + s);
    const Vector tt = seeded_vector(20, 200 + s);
    const LinearFtResult r = gd_finetune_linear(x, x * tt, ts, default_linear_step(x), 1e-20);
    const Vector cf = closed_form_linear(projectors_from_rows(x), ts, tt);
    EXPECT_LT((r.gamma - cf).norm() / cf.norm(), 1e-6) << "seed " << s;
  }
}

TEST(GdLinear, DivergesWithHugeStep) {
  const Matrix x = sample(identity_design(5), 3, 0);
  EXPECT_THROW(gd_finetune_linear(x, x * seeded_vector(5, 1), Vector::Zero(5), 100.0), divergence_error);
}

TEST(GdLinear, ReportsNonConvergence) {
  const Matrix x = sample(identity_design(5), 3, 0);
  EXPECT_THROW(gd_finetune_linear(x, x * seeded_vector(5, 1), Vector::Zero(5), 1e-6, 1e-10, 10),
               non_convergence_error);
}

TEST(ClosedForm, Cases) {
  const Matrix x = sample(identity_design(4), 2, 3);
  const Vector s = seeded_vector(4, 4);
  EXPECT_LT((closed_form_linear(projectors_from_rows(x), s, s) - s).norm(), 1e-12);
  const Vector t = seeded_vector(4, 5);
  EXPECT_LT((closed_form_linear(projectors_from_rows(Matrix::Identity(4, 4)), s, t) - t).norm(), 1e-12);

  Matrix e1 = Matrix::Zero(1, 3);
  e1(0, 0) = 1.0;
  const Vector g = closed_form_linear(projectors_from_rows(e1), vec({1, 1, 1}), vec({2, 5, 7}));
  EXPECT_LT((g - vec({2, 1, 1})).norm(), 1e-12);
}

TEST(PopulationRisk, Cases) {
  const GaussianDesign id = identity_design(5);
  const Vector t = seeded_vector(5, 1);
  EXPECT_EQ(population_risk_linear(t, t, id), 0.0);
  Vector w = t;
  w(0) += 3.0;
  w(1) += 4.0;
  EXPECT_NEAR(population_risk_linear(w, t, id), 25.0, 1e-12);
}

TEST(PopulationRisk, ClosedFormRiskIdentity) {
  const GaussianDesign g = make_design({3.0, 2.0, 1.0, 0.5, 0.25, 0.1}, 7);
  const Matrix x = sample(g, 3, 8);
  const ProjectorPair p = projectors_from_rows(x);
  const Vector ts = seeded_vector(6, 9), tt = seeded_vector(6, 10);
  const Vector gamma = closed_form_linear(p, ts, tt);
  // ||Sigma^{1/2} P_perp (tt - ts)||^2 via an explicit square root
  const Matrix root = g.eig.V * g.eig.lambda.cwiseSqrt().asDiagonal() * g.eig.V.transpose();
  const double want = (root * p.perp(Vector(tt - ts))).squaredNorm();
  EXPECT_NEAR(population_risk_linear(gamma, tt, g), want, 1e-12 * std::max(1.0, want));
}

TEST(DavisKahan, ZeroWhenRowsSpanTopEigenvectors) {
  const GaussianDesign g = make_design({5, 4, 3, 2, 1, 0.5}, 1);
  const Matrix x = g.eig.top(3).transpose();  // rows = top-3 eigenvectors
  EXPECT_LT(davis_kahan_gap(g.eig, x, 2), 1e-10);
  EXPECT_LT(davis_kahan_gap(g.eig, x, 3), 1e-10);
}

TEST(DavisKahan, InequalityOnSeededDraws) {
  std::vector<double> spec(30);
  for (int i = 0; i < 30; ++i) spec[static_cast<std::size_t>(i)] = i < 5 ? 3.0 : 0.2 + 0.01 * i;
  const GaussianDesign g = make_design(spec, 2);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix x = sample(g, 10, s);
    const double lhs = davis_kahan_gap(g.eig, x, 5);
    // oracle: direct spectral norm of the difference, independent of the bound code
    Eigen::JacobiSVD<Matrix> svd(empirical_covariance(x) - g.covariance());
    EXPECT_LE(lhs, svd.singularValues()(0) / g.eig.lambda(4) + 1e-12) << "seed " << s;
  }
}

TEST(Bounds, ZeroForIdenticalTasks) {
  const GaussianDesign g = make_design({2, 1, 0.5, 0.1}, 1);
  const Matrix x = sample(g, 2, 3);
  const Vector s = seeded_vector(4, 2);
  EXPECT_EQ(risk_upper_bound_empirical(g.eig, x, s, s, 2).empirical_bound, 0.0);
  EXPECT_EQ(risk_upper_bound_concentration(g.eig, 2, 1.0, 1.0, s, s, 2).concentration_bound, 0.0);
}

TEST(Bounds, ZeroWhenCovarianceIsExact) {
  const GaussianDesign g = make_design({2, 1, 0.5, 0.1}, 1);
  const BoundReport b = risk_upper_bound_from_gap(g.eig, 0.0, seeded_vector(4, 1), seeded_vector(4, 2), 2);
  EXPECT_EQ(b.empirical_bound, 0.0);
}

TEST(Bounds, TwoTermFormula) {
  const GaussianDesign g = make_design({4, 2, 1, 0.5}, 3);
  const Vector s = seeded_vector(4, 5), t = seeded_vector(4, 6);
  const double gap = 0.37;
  const Vector delta = t - s;
  const double top = (g.eig.top(2).transpose() * delta).squaredNorm();
  const double bot = (g.eig.bottom(2).transpose() * delta).squaredNorm();
  const double want = 2.0 * std::pow(gap, 3) / (2.0 * 2.0) * top + 2.0 * gap * bot;
  EXPECT_NEAR(risk_upper_bound_from_gap(g.eig, gap, s, t, 2).empirical_bound, want, 1e-12);
}

TEST(Bounds, EmpiricalBoundDominatesRisk) {
  const GaussianDesign g = make_design(Fig1Preset{200, 20, 1.5, 0.3}.spectrum(), 4);
  for (std::uint64_t s = 0; s < 10; ++s) {
    TaskPairSpec spec;
    spec.mode = TaskMode::bottom_eigen_align;
    spec.m = 20;
    spec.seed = s;
    const TaskPair tp = make_task_pair(spec, g);
    const Matrix x = sample(g, 40, 50 + s);
    const Vector gamma = closed_form_linear(projectors_from_rows(x), tp.theta_s, tp.theta_t);
    const double risk = population_risk_linear(gamma, tp.theta_t, g);
    EXPECT_GE(risk_upper_bound_empirical(g.eig, x, tp.theta_s, tp.theta_t, 20).empirical_bound, risk);
  }
}

TEST(Bounds, RejectsBadK) {
  const GaussianDesign g = make_design({1, 1, 0}, 0);
  const Vector v = Vector::Ones(3);
  EXPECT_THROW(risk_upper_bound_from_gap(g.eig, 0.1, v, v, 0), invalid_argument);
  EXPECT_THROW(risk_upper_bound_from_gap(g.eig, 0.1, v, v, 3), invalid_argument);  // lambda_3 = 0
  EXPECT_THROW(risk_upper_bound_concentration(g.eig, 5, 0.5, 1.0, v, v, 1), invalid_argument);
}

TEST(GFunction, IdentityAtNEqualsD) {
  EXPECT_NEAR(g_function(Vector::Ones(20), 1.0, 20.0, 1.0), 1.0, 1e-15);
}

TEST(GFunction, Fig1Behaviour) {
  const GaussianDesign g = make_design(Fig1Preset{}.spectrum(), 0);
  const double g10 = g_function(g.eig.lambda, 1.0, 10, 1.0);
  const double g100 = g_function(g.eig.lambda, 1.0, 100, 1.0);
  const double g1000 = g_function(g.eig.lambda, 1.0, 1000, 1.0);
  EXPECT_GT(g10, g100);
  EXPECT_GT(g100, g1000);
  // sum(lambda) / (n lambda_1) = 360 / (10 * 1.5) = 24 dominates at n = 10
  EXPECT_NEAR(g10, 1.5 * 24.0, 1e-9);
  // bottom-align puts the whole diff in the top-50 span: only the cubic term survives
  TaskPairSpec spec;
  spec.mode = TaskMode::bottom_eigen_align;
  const TaskPair tp = make_task_pair(spec, g);
  const BoundReport b = risk_upper_bound_concentration(g.eig, 10, 1.0, 1.0, tp.theta_s, tp.theta_t, 50);
  EXPECT_NEAR(b.concentration_bound, 2.0 * std::pow(g10, 3) / (1.5 * 1.5), 1e-6 * b.concentration_bound);
}

TEST(SelectK, Cases) {
  EXPECT_EQ(select_k_heuristic(eig_sym(Matrix::Identity(7, 7))), 7);
  EXPECT_EQ(select_k_heuristic(make_design(Fig1Preset{}.spectrum(), 0).eig), 50);
  std::vector<double> spike(10, 1.0);
  spike[0] = 10.0;
  EXPECT_EQ(select_k_heuristic(make_design(spike, 0).eig), 1);
}
