#include "fusion/smoother.hpp"

#include <stdexcept>

#include "fusion/block_tridiag.hpp"
#include "fusion/filters.hpp"
#include "fusion/sensor_models.hpp"
#include "fusion/simulator.hpp"

namespace fusion {

namespace {

Vector3d used_mag(const Vector3d& raw) {
  const double n = raw.norm();
  return n > 1e-12 ? Vector3d(raw / n) : raw;
}

}  // namespace

Quat initial_orientation(const MeasurementSeries& meas, const Environment& env,
                         const EstimatorOptions& options) {
  if (options.init_orientation) {
    return options.init_orientation->normalized();
  }
  if (!meas.has_mag() || !options.use_mag) {
    throw std::invalid_argument(
        "no magnetometer data for initialization; provide init_orientation");
  }
  return quest_initial_orientation(meas.acc.front(), meas.mag.front(), env);
}

// ---------------------------------------------------------------------------
// Orientation smoothing
// ---------------------------------------------------------------------------

namespace {

struct OriSmoothContext {
  const MeasurementSeries& meas;
  const NoiseModel& noise;
  const Environment& env;
  bool use_mag;
  bool estimate_bias;
  Quat q_init;
  std::vector<Vector3d> mag_unit;  // pre-normalized magnetometer samples

  double w_prior, w_gyr, w_acc, w_mag, w_bias;

  double objective(const std::vector<Quat>& lin, const Vector3d& bias) const {
    const double T = meas.sample_period;
    const int N = static_cast<int>(meas.size());
    const Vector3d zero = Vector3d::Zero();
    double f = 0.0;
    {
      const auto r = residual_prior_orientation(zero, lin[0], q_init);
      f += w_prior * w_prior * r.e.squaredNorm();
    }
    if (estimate_bias) {
      f += w_bias * w_bias * bias.squaredNorm();
    }
    for (int t = 0; t + 1 < N; ++t) {
      const auto r =
          residual_gyr_dynamics(zero, zero, lin[t], lin[t + 1], meas.gyr[t], T, bias);
      f += w_gyr * w_gyr * r.e.squaredNorm();
    }
    for (int t = 1; t < N; ++t) {
      const auto ra = residual_acc(zero, lin[t], meas.acc[t], env);
      f += w_acc * w_acc * ra.e.squaredNorm();
      if (use_mag) {
        const auto rm = residual_mag(zero, lin[t], mag_unit[t], env);
        f += w_mag * w_mag * rm.e.squaredNorm();
      }
    }
    return 0.5 * f;
  }

  // Assembles J^T J and J^T eps of the relinearized problem (eta = 0).
  void build(const std::vector<Quat>& lin, const Vector3d& bias,
             BlockTridiagonalSystem& sys) const {
    const double T = meas.sample_period;
    const int N = static_cast<int>(meas.size());
    const Vector3d zero = Vector3d::Zero();
    sys.reset();

    {
      const auto r = residual_prior_orientation(zero, lin[0], q_init);
      const double w2 = w_prior * w_prior;
      sys.diag(0) += w2 * r.J_eta.transpose() * r.J_eta;
      sys.rhs(0) += w2 * r.J_eta.transpose() * r.e;
    }
    if (estimate_bias) {
      const double w2 = w_bias * w_bias;
      sys.extra_diag() += w2 * Matrix3d::Identity();
      sys.extra_rhs() += w2 * bias;
    }
    for (int t = 0; t + 1 < N; ++t) {
      const auto r =
          residual_gyr_dynamics(zero, zero, lin[t], lin[t + 1], meas.gyr[t], T, bias);
      const double w2 = w_gyr * w_gyr;
      sys.diag(t) += w2 * r.J_eta_t.transpose() * r.J_eta_t;
      sys.diag(t + 1) += w2 * r.J_eta_t1.transpose() * r.J_eta_t1;
      sys.lower(t) += w2 * r.J_eta_t1.transpose() * r.J_eta_t;
      sys.rhs(t) += w2 * r.J_eta_t.transpose() * r.e;
      sys.rhs(t + 1) += w2 * r.J_eta_t1.transpose() * r.e;
      if (estimate_bias) {
        sys.cross(t) += w2 * r.J_eta_t.transpose() * r.J_bias;
        sys.cross(t + 1) += w2 * r.J_eta_t1.transpose() * r.J_bias;
        sys.extra_diag() += w2 * r.J_bias.transpose() * r.J_bias;
        sys.extra_rhs() += w2 * r.J_bias.transpose() * r.e;
      }
    }
    for (int t = 1; t < N; ++t) {
      const auto ra = residual_acc(zero, lin[t], meas.acc[t], env);
      const double wa2 = w_acc * w_acc;
      sys.diag(t) += wa2 * ra.J_eta.transpose() * ra.J_eta;
      sys.rhs(t) += wa2 * ra.J_eta.transpose() * ra.e;
      if (use_mag) {
        const auto rm = residual_mag(zero, lin[t], mag_unit[t], env);
        const double wm2 = w_mag * w_mag;
        sys.diag(t) += wm2 * rm.J_eta.transpose() * rm.J_eta;
        sys.rhs(t) += wm2 * rm.J_eta.transpose() * rm.e;
      }
    }
  }
};

}  // namespace

SmootherResult smooth_orientation(const MeasurementSeries& meas,
                                  const NoiseModel& noise, const Environment& env,
                                  const GaussNewtonSettings& settings,
                                  const EstimatorOptions& options) {
  const int N = static_cast<int>(meas.size());
  if (N < 2) throw std::invalid_argument("need at least two samples");
  noise.validate();
  const bool use_mag = options.use_mag && meas.has_mag();

  OriSmoothContext ctx{meas,
                       noise,
                       env,
                       use_mag,
                       options.estimate_bias,
                       initial_orientation(meas, env, options),
                       {},
                       1.0 / noise.sigma_ori_prior,
                       1.0 / noise.sigma_gyr,
                       1.0 / noise.sigma_acc,
                       1.0 / noise.sigma_mag,
                       1.0 / noise.sigma_bias_prior};
  if (use_mag) {
    ctx.mag_unit.reserve(N);
    for (const auto& m : meas.mag) ctx.mag_unit.push_back(used_mag(m));
  }

  std::vector<Quat> lin;
  Vector3d bias = Vector3d::Zero();
  if (options.init_trace) {
    if (static_cast<int>(options.init_trace->size()) != N) {
      throw std::invalid_argument("init trace length mismatch");
    }
    lin = *options.init_trace;
    for (auto& q : lin) q = q.normalized();
  } else if (options.estimate_bias) {
    // Dead-reckoning drifts far with an uncorrected bias; start from the
    // bias-augmented recursive filter instead.
    const EstimateTrace init =
        ekf_orientation_deviation(meas, noise, env, options);
    lin = init.q;
    bias = init.bias.back();
  } else {
    lin = dead_reckon(meas, env, ctx.q_init).q;
  }

  SmootherResult result;
  BlockTridiagonalSystem sys(N, 3, options.estimate_bias ? 3 : 0);
  double f = ctx.objective(lin, bias);
  result.objective_history.push_back(f);

  bool converged = false;
  int iterations = 0;
  for (int k = 0; k < settings.max_iterations; ++k) {
    ctx.build(lin, bias, sys);
    const auto sol = sys.solve();

    // Search direction d = -H^{-1} G; slope at 0 is -d^T H d = -G^T H^{-1} G.
    double slope = 0.0;
    for (int t = 0; t < N; ++t) slope -= sys.rhs(t).dot(sol.x[t]);
    if (options.estimate_bias) slope -= sys.extra_rhs().dot(sol.x_extra);

    std::vector<Quat> trial(N);
    Vector3d trial_bias;
    const auto retract = [&](double beta) {
      for (int t = 0; t < N; ++t) {
        trial[t] = (exp_q(-0.5 * beta * sol.x[t]) * lin[t]).normalized();
      }
      trial_bias = options.estimate_bias ? Vector3d(bias - beta * sol.x_extra)
                                         : Vector3d::Zero();
    };
    const double beta = backtrack_line_search(
        [&](double b) {
          retract(b);
          return ctx.objective(trial, trial_bias);
        },
        f, slope, settings);
    iterations = k + 1;
    if (beta == 0.0) {
      result.trace.converged = false;
      break;
    }
    retract(beta);
    lin.swap(trial);
    bias = trial_bias;
    f = ctx.objective(lin, bias);
    result.objective_history.push_back(f);

    double step_norm = 0.0;
    for (int t = 0; t < N; ++t) {
      step_norm = std::max(step_norm, beta * sol.x[t].lpNorm<Eigen::Infinity>());
    }
    if (options.estimate_bias) {
      step_norm =
          std::max(step_norm, beta * sol.x_extra.lpNorm<Eigen::Infinity>());
    }
    if (step_norm < settings.step_tol) {
      converged = true;
      break;
    }
  }

  ctx.build(lin, bias, sys);
  const auto marg = sys.marginal_covariances();

  result.trace.sample_period = meas.sample_period;
  result.trace.q = lin;
  result.trace.cov_ori.reserve(N);
  for (int t = 0; t < N; ++t) result.trace.cov_ori.push_back(marg.cov[t]);
  result.trace.converged = result.trace.converged && converged;
  result.trace.iterations = iterations;
  result.objective = f;
  if (options.estimate_bias) {
    result.bias.delta = bias;
    result.bias.cov = marg.cov_extra;
    result.bias.method = "map-smoothing";
    result.bias.iterations = iterations;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Pose smoothing: state blocks x_t = (p, v, eta)
// ---------------------------------------------------------------------------

namespace {

struct PoseSmoothContext {
  const MeasurementSeries& meas;
  const NoiseModel& noise;
  const Environment& env;
  Quat q_init;
  double w_pos_prior, w_vel_prior, w_ori_prior, w_gyr, w_acc, w_pos;

  struct State {
    std::vector<Vector3d> p, v;
    std::vector<Quat> q;
  };

  double objective(const State& s) const {
    const double T = meas.sample_period;
    const int N = static_cast<int>(meas.size());
    const Vector3d zero = Vector3d::Zero();
    double f = 0.0;
    f += w_pos_prior * w_pos_prior * (s.p[0] - meas.pos[0]).squaredNorm();
    f += w_vel_prior * w_vel_prior * s.v[0].squaredNorm();
    {
      const auto r = residual_prior_orientation(zero, s.q[0], q_init);
      f += w_ori_prior * w_ori_prior * r.e.squaredNorm();
    }
    for (int t = 0; t + 1 < N; ++t) {
      const auto rg =
          residual_gyr_dynamics(zero, zero, s.q[t], s.q[t + 1], meas.gyr[t], T);
      f += w_gyr * w_gyr * rg.e.squaredNorm();
      const auto rp = residual_pose_dynamics(s.p[t], s.p[t + 1], s.v[t], s.v[t + 1],
                                             zero, s.q[t], meas.acc[t], T, env);
      f += w_acc * w_acc * (rp.e_p.squaredNorm() + rp.e_v.squaredNorm());
    }
    for (int t = 1; t < N; ++t) {
      f += w_pos * w_pos * (meas.pos[t] - s.p[t]).squaredNorm();
    }
    return 0.5 * f;
  }

  void build(const State& s, BlockTridiagonalSystem& sys) const {
    const double T = meas.sample_period;
    const int N = static_cast<int>(meas.size());
    const Vector3d zero = Vector3d::Zero();
    sys.reset();
    // Block layout within a state: p at 0, v at 3, eta at 6.

    // Priors at t = 1.
    {
      const double w2 = w_pos_prior * w_pos_prior;
      sys.diag(0).block<3, 3>(0, 0) += w2 * Matrix3d::Identity();
      sys.rhs(0).segment<3>(0) += w2 * (s.p[0] - meas.pos[0]);
    }
    {
      const double w2 = w_vel_prior * w_vel_prior;
      sys.diag(0).block<3, 3>(3, 3) += w2 * Matrix3d::Identity();
      sys.rhs(0).segment<3>(3) += w2 * s.v[0];
    }
    {
      const auto r = residual_prior_orientation(zero, s.q[0], q_init);
      const double w2 = w_ori_prior * w_ori_prior;
      sys.diag(0).block<3, 3>(6, 6) += w2 * r.J_eta.transpose() * r.J_eta;
      sys.rhs(0).segment<3>(6) += w2 * r.J_eta.transpose() * r.e;
    }

    for (int t = 0; t + 1 < N; ++t) {
      {
        const auto r =
            residual_gyr_dynamics(zero, zero, s.q[t], s.q[t + 1], meas.gyr[t], T);
        const double w2 = w_gyr * w_gyr;
        sys.diag(t).block<3, 3>(6, 6) += w2 * r.J_eta_t.transpose() * r.J_eta_t;
        sys.diag(t + 1).block<3, 3>(6, 6) += w2 * r.J_eta_t1.transpose() * r.J_eta_t1;
        sys.lower(t).block<3, 3>(6, 6) += w2 * r.J_eta_t1.transpose() * r.J_eta_t;
        sys.rhs(t).segment<3>(6) += w2 * r.J_eta_t.transpose() * r.e;
        sys.rhs(t + 1).segment<3>(6) += w2 * r.J_eta_t1.transpose() * r.e;
      }
      const auto r = residual_pose_dynamics(s.p[t], s.p[t + 1], s.v[t], s.v[t + 1],
                                            zero, s.q[t], meas.acc[t], T, env);
      const double w2 = w_acc * w_acc;
      // Position-propagation residual rows: blocks at t (p, v, eta) and t+1 (p).
      Eigen::Matrix<double, 3, 9> Jt = Eigen::Matrix<double, 3, 9>::Zero();
      Jt.block<3, 3>(0, 0) = r.Jp_p_t;
      Jt.block<3, 3>(0, 3) = r.Jp_v_t;
      Jt.block<3, 3>(0, 6) = r.Jp_eta;
      Eigen::Matrix<double, 3, 9> Jt1 = Eigen::Matrix<double, 3, 9>::Zero();
      Jt1.block<3, 3>(0, 0) = r.Jp_p_t1;
      sys.diag(t) += w2 * Jt.transpose() * Jt;
      sys.diag(t + 1) += w2 * Jt1.transpose() * Jt1;
      sys.lower(t) += w2 * Jt1.transpose() * Jt;
      sys.rhs(t) += w2 * Jt.transpose() * r.e_p;
      sys.rhs(t + 1) += w2 * Jt1.transpose() * r.e_p;
      // Velocity-propagation residual rows: blocks at t (v, eta) and t+1 (v).
      Jt.setZero();
      Jt.block<3, 3>(0, 3) = r.Jv_v_t;
      Jt.block<3, 3>(0, 6) = r.Jv_eta;
      Jt1.setZero();
      Jt1.block<3, 3>(0, 3) = r.Jv_v_t1;
      sys.diag(t) += w2 * Jt.transpose() * Jt;
      sys.diag(t + 1) += w2 * Jt1.transpose() * Jt1;
      sys.lower(t) += w2 * Jt1.transpose() * Jt;
      sys.rhs(t) += w2 * Jt.transpose() * r.e_v;
      sys.rhs(t + 1) += w2 * Jt1.transpose() * r.e_v;
    }

    for (int t = 1; t < N; ++t) {
      const auto r = residual_pos(s.p[t], meas.pos[t]);
      const double w2 = w_pos * w_pos;
      sys.diag(t).block<3, 3>(0, 0) += w2 * r.J_p.transpose() * r.J_p;
      sys.rhs(t).segment<3>(0) += w2 * r.J_p.transpose() * r.e;
    }
  }
};

}  // namespace

SmootherResult smooth_pose(const MeasurementSeries& meas, const NoiseModel& noise,
                           const Environment& env,
                           const GaussNewtonSettings& settings,
                           const EstimatorOptions& options) {
  const int N = static_cast<int>(meas.size());
  if (N < 2) throw std::invalid_argument("need at least two samples");
  if (!meas.has_pos()) throw std::invalid_argument("pose estimation needs positions");
  noise.validate();

  PoseSmoothContext ctx{meas,
                        noise,
                        env,
                        options.init_orientation ? options.init_orientation->normalized()
                                                 : Quat::identity(),
                        1.0 / noise.sigma_pos,
                        1.0 / noise.sigma_vel_prior,
                        1.0 / noise.sigma_ori_prior,
                        1.0 / noise.sigma_gyr,
                        1.0 / noise.sigma_acc,
                        1.0 / noise.sigma_pos};

  PoseSmoothContext::State s;
  const EstimateTrace dr = dead_reckon(meas, env, ctx.q_init, meas.pos[0],
                                       Vector3d::Zero(), true);
  s.q = dr.q;
  s.p = dr.p;
  s.v = dr.v;

  SmootherResult result;
  BlockTridiagonalSystem sys(N, 9);
  double f = ctx.objective(s);
  result.objective_history.push_back(f);

  bool converged = false;
  int iterations = 0;
  PoseSmoothContext::State trial = s;
  for (int k = 0; k < settings.max_iterations; ++k) {
    ctx.build(s, sys);
    const auto sol = sys.solve();

    double slope = 0.0;
    for (int t = 0; t < N; ++t) slope -= sys.rhs(t).dot(sol.x[t]);

    const auto retract = [&](double beta) {
      for (int t = 0; t < N; ++t) {
        trial.p[t] = s.p[t] - beta * sol.x[t].segment<3>(0);
        trial.v[t] = s.v[t] - beta * sol.x[t].segment<3>(3);
        trial.q[t] = (exp_q(-0.5 * beta * sol.x[t].segment<3>(6)) * s.q[t]).normalized();
      }
    };
    const double beta = backtrack_line_search(
        [&](double b) {
          retract(b);
          return ctx.objective(trial);
        },
        f, slope, settings);
    iterations = k + 1;
    if (beta == 0.0) {
      result.trace.converged = false;
      break;
    }
    retract(beta);
    std::swap(s, trial);
    f = ctx.objective(s);
    result.objective_history.push_back(f);

    double step_norm = 0.0;
    for (int t = 0; t < N; ++t) {
      step_norm = std::max(step_norm, beta * sol.x[t].lpNorm<Eigen::Infinity>());
    }
    if (step_norm < settings.step_tol) {
      converged = true;
      break;
    }
  }

  ctx.build(s, sys);
  const auto marg = sys.marginal_covariances();

  result.trace.sample_period = meas.sample_period;
  result.trace.q = s.q;
  result.trace.p = s.p;
  result.trace.v = s.v;
  result.trace.cov_ori.reserve(N);
  result.trace.cov_pos.reserve(N);
  for (int t = 0; t < N; ++t) {
    result.trace.cov_ori.push_back(marg.cov[t].block<3, 3>(6, 6));
    result.trace.cov_pos.push_back(marg.cov[t].block<3, 3>(0, 0));
  }
  result.trace.converged = result.trace.converged && converged;
  result.trace.iterations = iterations;
  result.objective = f;
  return result;
}

}  // namespace fusion
