// Fine-tune a linear model from a source teacher and compare GD with the
// closed form, then push the same task through a depth-3 linear network.

#include <cstdio>

#include "ftlab/ftlab.hpp"

int main() {
  using namespace ftlab;
  const GaussianDesign design = make_design(Fig1Preset{200, 20, 1.5, 0.3}.spectrum(), 7);

  TaskPairSpec spec;
  spec.mode = TaskMode::bottom_eigen_align;
  spec.m = 20;
  spec.seed = 11;
  const TaskPair tp = make_task_pair(spec, design);

  const Matrix x = sample(design, 40, 3);
  const Vector y = x * tp.theta_t;
  const ProjectorPair proj = projectors_from_rows(x);

  const LinearFtResult gd = gd_finetune_linear(x, y, tp.theta_s);
  const Vector gamma = closed_form_linear(proj, tp.theta_s, tp.theta_t);
  std::printf("GD steps %ld, |gd - closed form| = %.3e\n", gd.iterations, (gd.gamma - gamma).norm());
  std::printf("risk %.6f\n", population_risk_linear(gamma, tp.theta_t, design));

  const BoundReport b = risk_upper_bound_empirical(design.eig, x, tp.theta_s, tp.theta_t, 20);
  std::printf("empirical bound %.6f (||Sigma - Sigma_hat|| = %.4f)\n", b.empirical_bound, b.sigma_gap);

  for (int depth : {1, 3, 1000}) {
    const Vector beta = fixed_point_predictor(proj, tp.theta_s, tp.theta_t, depth);
    std::printf("L = %4d  risk %.6f\n", depth, population_risk_linear(beta, tp.theta_t, design));
  }
}
