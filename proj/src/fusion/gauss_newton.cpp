#include "fusion/gauss_newton.hpp"

namespace fusion {

double backtrack_line_search(const std::function<double(double)>& f_of_beta,
                             double f0, double slope,
                             const GaussNewtonSettings& settings) {
  double beta = 1.0;
  while (beta >= settings.min_step) {
    if (f_of_beta(beta) <= f0 + settings.armijo_c * beta * slope) {
      return beta;
    }
    beta *= settings.backtrack_factor;
  }
  return 0.0;
}

GaussNewtonResult gauss_newton_solve(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residual,
    const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& jacobian,
    const Eigen::VectorXd& x0, const GaussNewtonSettings& settings) {
  GaussNewtonResult result;
  result.x = x0;
  Eigen::VectorXd eps = residual(result.x);
  result.objective = 0.5 * eps.squaredNorm();

  for (int k = 0; k < settings.max_iterations; ++k) {
    const Eigen::MatrixXd J = jacobian(result.x);
    const Eigen::VectorXd grad = J.transpose() * eps;
    const Eigen::MatrixXd H = J.transpose() * J;
    const Eigen::VectorXd step = H.ldlt().solve(-grad);

    const double slope = grad.dot(step);  // <= 0 for a descent direction
    const double f0 = result.objective;
    const double beta = backtrack_line_search(
        [&](double b) { return 0.5 * residual(result.x + b * step).squaredNorm(); },
        f0, slope, settings);
    result.iterations = k + 1;
    if (beta == 0.0) {
      result.line_search_failed = true;
      return result;
    }
    result.x += beta * step;
    eps = residual(result.x);
    result.objective = 0.5 * eps.squaredNorm();
    if ((beta * step).lpNorm<Eigen::Infinity>() < settings.step_tol) {
      result.converged = true;
      return result;
    }
  }
  return result;
}

}  // namespace fusion
