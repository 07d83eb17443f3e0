// Shared test utilities: deterministic random draws and central-difference
// Jacobian checks.
#pragma once

#include <functional>
#include <random>

#include <Eigen/Dense>

#include "fusion/orientation.hpp"

namespace test {

inline std::mt19937_64& rng() {
  static std::mt19937_64 engine(20240511);
  return engine;
}

inline double uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng());
}

inline Eigen::Vector3d random_vec3(double scale = 1.0) {
  return scale * Eigen::Vector3d(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
}

inline fusion::Quat random_unit_quat() {
  std::normal_distribution<double> g(0.0, 1.0);
  fusion::Quat q(g(rng()), Eigen::Vector3d(g(rng()), g(rng()), g(rng())));
  return q.normalized();
}

// Central-difference Jacobian of f: R^n -> R^m around x, step h.
inline Eigen::MatrixXd numeric_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd J(f0.size(), x.size());
  for (int i = 0; i < x.size(); ++i) {
    Eigen::VectorXd hi = x, lo = x;
    hi(i) += h;
    lo(i) -= h;
    J.col(i) = (f(hi) - f(lo)) / (2.0 * h);
  }
  return J;
}

// Relative error between an analytic and a numeric Jacobian.
inline double jacobian_rel_error(const Eigen::MatrixXd& analytic,
                                 const Eigen::MatrixXd& numeric) {
  const double scale = std::max(1.0, numeric.norm());
  return (analytic - numeric).norm() / scale;
}

}  // namespace test
