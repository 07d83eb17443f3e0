#include "fusion/calibration.hpp"

#include <cmath>
#include <stdexcept>

#include "fusion/sensor_models.hpp"

namespace fusion {

std::pair<EstimateTrace, BiasEstimate> map_bias_smoothing(
    const MeasurementSeries& meas, const NoiseModel& noise, const Environment& env,
    const GaussNewtonSettings& settings, const EstimatorOptions& options) {
  EstimatorOptions opt = options;
  opt.estimate_bias = true;
  SmootherResult res = smooth_orientation(meas, noise, env, settings, opt);
  return {std::move(res.trace), std::move(res.bias)};
}

std::pair<EstimateTrace, BiasEstimate> map_bias_filtering(
    const MeasurementSeries& meas, const NoiseModel& noise, const Environment& env,
    MapFilterMethod method, const EstimatorOptions& options) {
  EstimatorOptions opt = options;
  opt.estimate_bias = true;
  EstimateTrace trace;
  BiasEstimate bias;
  switch (method.kind) {
    case MapFilterMethod::kOptFilter:
      trace = filter_orientation_opt(meas, noise, env, per_step_settings(), opt);
      bias.method = "map-filter-opt";
      break;
    case MapFilterMethod::kEkfQuat:
      trace = ekf_quaternion(meas, noise, env, opt);
      bias.method = "map-ekf-quat";
      break;
    case MapFilterMethod::kEkfDev:
      trace = ekf_orientation_deviation(meas, noise, env, opt);
      bias.method = "map-ekf-dev";
      break;
  }
  bias.delta = trace.bias.back();
  bias.cov = trace.cov_bias.back();
  bias.iterations = trace.iterations;
  return {std::move(trace), std::move(bias)};
}

double ml_objective(const Vector3d& theta, const MeasurementSeries& meas,
                    const NoiseModel& noise, const Environment& env,
                    const EstimatorOptions& options) {
  // Deviation-state EKF with the candidate bias subtracted from the gyro,
  // accumulating the Gaussian negative log-likelihood of the one-step-ahead
  // measurement predictions.
  const int N = static_cast<int>(meas.size());
  if (N < 2) throw std::invalid_argument("need at least two samples");
  const double T = meas.sample_period;
  const bool use_mag = options.use_mag && meas.has_mag();
  const int m = use_mag ? 6 : 3;

  Quat q_lin = initial_orientation(meas, env, options);
  Matrix3d P = noise.sigma_ori_prior * noise.sigma_ori_prior * Matrix3d::Identity();

  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(m, m);
  R.topLeftCorner<3, 3>() = noise.sigma_acc * noise.sigma_acc * Matrix3d::Identity();
  if (use_mag) {
    R.bottomRightCorner<3, 3>() =
        noise.sigma_mag * noise.sigma_mag * Matrix3d::Identity();
  }

  double nll = 0.0;
  for (int t = 1; t < N; ++t) {
    q_lin = (q_lin * exp_q(0.5 * T * (meas.gyr[t - 1] - theta))).normalized();
    P += T * T * noise.sigma_gyr * noise.sigma_gyr * Matrix3d::Identity();

    const Matrix3d Rbn = quat_to_rotmat(q_lin).transpose();
    Eigen::VectorXd eps(m);
    Eigen::MatrixXd H(m, 3);
    eps.head<3>() = meas.acc[t] + Rbn * env.gravity_n;
    H.topRows<3>() = -Rbn * cross_matrix(env.gravity_n);
    if (use_mag) {
      const Vector3d ym = meas.mag[t].norm() > 1e-12
                              ? Vector3d(meas.mag[t].normalized())
                              : meas.mag[t];
      eps.tail<3>() = ym - Rbn * env.mag_field_n;
      H.bottomRows<3>() = Rbn * cross_matrix(env.mag_field_n);
    }
    const Eigen::MatrixXd S = H * P * H.transpose() + R;
    const Eigen::LLT<Eigen::MatrixXd> Sllt(S);
    if (Sllt.info() != Eigen::Success) {
      throw std::runtime_error("non-finite prediction covariance");
    }
    const Eigen::VectorXd w = Sllt.matrixL().solve(eps);
    double logdet = 0.0;
    for (int i = 0; i < m; ++i) logdet += std::log(Sllt.matrixL()(i, i));
    nll += 0.5 * w.squaredNorm() + logdet;  // logdet(S) = 2 sum(log diag L)

    const Eigen::MatrixXd K =
        P * H.transpose() * Sllt.solve(Eigen::MatrixXd::Identity(m, m));
    const Vector3d dx = K * eps;
    P -= K * S * K.transpose();
    P = 0.5 * (P + P.transpose());
    q_lin = (exp_q(0.5 * dx) * q_lin).normalized();
  }
  if (!std::isfinite(nll)) throw std::runtime_error("non-finite objective");
  return nll;
}

BiasEstimate ml_bias_estimate(const MeasurementSeries& meas, const NoiseModel& noise,
                              const Environment& env, const MlSettings& settings,
                              const EstimatorOptions& options) {
  const auto f = [&](const Vector3d& th) {
    return ml_objective(th, meas, noise, env, options);
  };
  const auto grad = [&](const Vector3d& th) {
    Vector3d g;
    for (int i = 0; i < 3; ++i) {
      const double h = settings.gradient_step * std::max(1.0, std::abs(th(i)));
      Vector3d hi = th, lo = th;
      hi(i) += h;
      lo(i) -= h;
      g(i) = (f(hi) - f(lo)) / (2.0 * h);
    }
    return g;
  };

  Vector3d theta = settings.initial_theta;
  double fval = f(theta);
  Vector3d g = grad(theta);
  Matrix3d Hinv = Matrix3d::Identity();  // inverse Hessian approximation

  BiasEstimate out;
  out.method = "ml";
  int k = 0;
  for (; k < settings.max_iterations; ++k) {
    if (g.lpNorm<Eigen::Infinity>() < settings.gradient_tol) break;
    Vector3d d = -Hinv * g;
    if (d.dot(g) > 0.0) d = -g;  // safeguard: fall back to steepest descent
    // Keep steps inside the physically meaningful bias range; large jumps
    // land in the aliased region of the rotation increments.
    const double dmax = d.lpNorm<Eigen::Infinity>();
    if (dmax > 0.1) d *= 0.1 / dmax;

    // Backtracking line search on the likelihood.
    double beta = 1.0;
    double f_new = fval;
    bool accepted = false;
    while (beta > 1e-12) {
      f_new = f(theta + beta * d);
      if (f_new <= fval + 1e-4 * beta * g.dot(d)) {
        accepted = true;
        break;
      }
      beta *= 0.5;
    }
    if (!accepted) break;

    const Vector3d theta_new = theta + beta * d;
    const Vector3d g_new = grad(theta_new);
    const Vector3d s = theta_new - theta;
    const Vector3d y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-14) {
      const double rho = 1.0 / sy;
      const Matrix3d I = Matrix3d::Identity();
      Hinv = (I - rho * s * y.transpose()) * Hinv * (I - rho * y * s.transpose()) +
             rho * s * s.transpose();
    }
    theta = theta_new;
    fval = f_new;
    g = g_new;
  }
  out.delta = theta;
  out.cov = Hinv;  // quasi-Newton curvature proxy
  out.iterations = k;
  return out;
}

std::vector<ShrinkageRow> map_shrinkage_study(const MeasurementSeries& meas,
                                              const NoiseModel& noise,
                                              const Environment& env,
                                              const std::vector<double>& prior_sigmas,
                                              const EstimatorOptions& options) {
  if (prior_sigmas.size() < 2) {
    throw std::invalid_argument("shrinkage study needs at least two priors");
  }
  std::vector<ShrinkageRow> rows;
  {
    ShrinkageRow ml;
    ml.method = "ml";
    ml.estimate = ml_bias_estimate(meas, noise, env, {}, options).delta;
    rows.push_back(ml);
  }
  for (double sigma : prior_sigmas) {
    NoiseModel n = noise;
    n.sigma_bias_prior = sigma;
    ShrinkageRow row;
    row.method = "map";
    row.prior_sigma = sigma;
    row.estimate = map_bias_smoothing(meas, n, env, {}, options).second.delta;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace fusion
