// Generic Gauss-Newton driver for dense nonlinear least-squares problems and
// the shared backtracking line-search policy used by the trajectory solvers.
#pragma once

#include <functional>

#include <Eigen/Dense>

namespace fusion {

struct GaussNewtonSettings {
  int max_iterations = 50;
  double step_tol = 1e-6;        // infinity norm of the state update
  double armijo_c = 1e-4;        // sufficient-decrease constant
  double backtrack_factor = 0.5;
  double min_step = 9.5367431640625e-7;  // 2^-20
};

struct GaussNewtonResult {
  Eigen::VectorXd x;
  double objective = 0.0;  // 0.5 * ||eps||^2 at the returned iterate
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
};

// Minimizes 0.5 * ||eps(x)||^2 for a stacked weighted residual eps with
// Jacobian J. Iterates x <- x - beta (J^T J)^{-1} J^T eps with backtracking
// on beta; the objective never increases across accepted steps.
GaussNewtonResult gauss_newton_solve(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residual,
    const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& jacobian,
    const Eigen::VectorXd& x0, const GaussNewtonSettings& settings = {});

// Backtracking helper shared with the manifold solvers: finds beta such that
// f(beta) <= f0 + c * beta * slope (slope = directional derivative at 0,
// negative for a descent direction). Returns 0 when the search fails.
double backtrack_line_search(const std::function<double(double)>& f_of_beta,
                             double f0, double slope,
                             const GaussNewtonSettings& settings);

}  // namespace fusion
