#include "fusion/filters.hpp"

#include <stdexcept>

#include "fusion/sensor_models.hpp"

namespace fusion {

namespace {

constexpr double kPsdTol = 1e-10;

Vector3d unit_or_keep(const Vector3d& raw) {
  const double n = raw.norm();
  return n > 1e-12 ? Vector3d(raw / n) : raw;
}

void symmetrize(Eigen::MatrixXd& P) { P = (0.5 * (P + P.transpose())).eval(); }

bool is_psd(const Eigen::MatrixXd& P, double scale) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(P);
  return eig.eigenvalues().minCoeff() > -kPsdTol * std::max(1.0, scale);
}

}  // namespace

Matrix3d quat_cov_to_eta_cov(const Quat& q, const Matrix4d& cov_q) {
  Mat34 sel = Mat34::Zero();
  sel.block<3, 3>(0, 1).setIdentity();
  const Matrix4d Rbn = right_mult_matrix(q.conj());
  return 4.0 * sel * Rbn * cov_q * Rbn.transpose() * sel.transpose();
}

// ---------------------------------------------------------------------------
// Filtering by per-step optimization
// ---------------------------------------------------------------------------

namespace {

struct FiltOptStep {
  // Solves one time step; state is eta (3) or (eta, bias) (6).
  const MeasurementSeries& meas;
  const NoiseModel& noise;
  const Environment& env;
  bool use_mag;
  bool estimate_bias;

  double objective(int t, const Quat& q_lin, const Vector3d& bias,
                   const Quat& q_pred, const Vector3d& bias_prev,
                   const Eigen::LLT<Eigen::MatrixXd>& P_pred_llt) const {
    const int n = estimate_bias ? 6 : 3;
    Eigen::VectorXd ef(n);
    ef.head<3>() = -2.0 * log_q(q_pred * q_lin.conj());
    if (estimate_bias) ef.tail<3>() = bias - bias_prev;
    const Eigen::VectorXd w = P_pred_llt.matrixL().solve(ef);
    double f = w.squaredNorm();
    const auto ra = residual_acc(Vector3d::Zero(), q_lin, meas.acc[t], env);
    f += ra.e.squaredNorm() / (noise.sigma_acc * noise.sigma_acc);
    if (use_mag) {
      const auto rm =
          residual_mag(Vector3d::Zero(), q_lin, unit_or_keep(meas.mag[t]), env);
      f += rm.e.squaredNorm() / (noise.sigma_mag * noise.sigma_mag);
    }
    return 0.5 * f;
  }
};

}  // namespace

EstimateTrace filter_orientation_opt(const MeasurementSeries& meas,
                                     const NoiseModel& noise, const Environment& env,
                                     const GaussNewtonSettings& settings,
                                     const EstimatorOptions& options) {
  const int N = static_cast<int>(meas.size());
  if (N < 2) throw std::invalid_argument("need at least two samples");
  noise.validate();
  const double T = meas.sample_period;
  const bool use_mag = options.use_mag && meas.has_mag();
  const bool bias_on = options.estimate_bias;
  const int n = bias_on ? 6 : 3;

  EstimateTrace trace;
  trace.sample_period = T;
  trace.q.reserve(N);
  trace.cov_ori.reserve(N);
  if (bias_on) {
    trace.bias.reserve(N);
    trace.cov_bias.reserve(N);
  }

  Quat q_hat = initial_orientation(meas, env, options);
  Vector3d bias_hat = Vector3d::Zero();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  P.topLeftCorner<3, 3>() =
      noise.sigma_ori_prior * noise.sigma_ori_prior * Matrix3d::Identity();
  if (bias_on) {
    P.bottomRightCorner<3, 3>() =
        noise.sigma_bias_prior * noise.sigma_bias_prior * Matrix3d::Identity();
  }

  trace.q.push_back(q_hat);
  trace.cov_ori.push_back(P.topLeftCorner<3, 3>());
  if (bias_on) {
    trace.bias.push_back(bias_hat);
    trace.cov_bias.push_back(P.bottomRightCorner<3, 3>());
  }

  FiltOptStep step{meas, noise, env, use_mag, bias_on};
  const double wa2 = 1.0 / (noise.sigma_acc * noise.sigma_acc);
  const double wm2 = 1.0 / (noise.sigma_mag * noise.sigma_mag);

  for (int t = 1; t < N; ++t) {
    // Time update: propagate the linearization point and the covariance.
    const Matrix3d M =
        gyro_step_noise_map(q_hat, 0.5 * T * (meas.gyr[t - 1] - bias_hat));
    const Quat q_pred = (q_hat * exp_q(0.5 * T * (meas.gyr[t - 1] - bias_hat))).normalized();
    const Matrix3d GQG_ori =
        T * T * noise.sigma_gyr * noise.sigma_gyr * M * M.transpose();
    Eigen::MatrixXd P_pred(n, n);
    if (bias_on) {
      Eigen::MatrixXd F = Eigen::MatrixXd::Identity(n, n);
      F.topRightCorner<3, 3>() = -T * M;
      Eigen::MatrixXd GQG = Eigen::MatrixXd::Zero(n, n);
      GQG.topLeftCorner<3, 3>() = GQG_ori;
      GQG.bottomRightCorner<3, 3>() =
          noise.sigma_bias_walk * noise.sigma_bias_walk * Matrix3d::Identity();
      P_pred = F * P * F.transpose() + GQG;
    } else {
      P_pred = P + GQG_ori;
    }
    symmetrize(P_pred);
    const Eigen::LLT<Eigen::MatrixXd> P_pred_llt(P_pred);
    if (P_pred_llt.info() != Eigen::Success) {
      throw std::runtime_error("predicted covariance not positive definite");
    }
    const Eigen::MatrixXd P_pred_inv =
        P_pred_llt.solve(Eigen::MatrixXd::Identity(n, n));

    Quat q_lin = q_pred;
    Vector3d bias_lin = bias_hat;
    const Vector3d bias_prev = bias_hat;
    double f = step.objective(t, q_lin, bias_lin, q_pred, bias_prev, P_pred_llt);

    Eigen::MatrixXd H(n, n);
    Eigen::VectorXd g(n), d(n);
    for (int k = 0; k < settings.max_iterations; ++k) {
      // e_f Jacobian is the identity; measurement residuals touch eta only.
      Eigen::VectorXd ef = Eigen::VectorXd::Zero(n);
      ef.head<3>() = -2.0 * log_q(q_pred * q_lin.conj());
      if (bias_on) ef.tail<3>() = bias_lin - bias_prev;
      H = P_pred_inv;
      g = P_pred_inv * ef;

      const auto ra = residual_acc(Vector3d::Zero(), q_lin, meas.acc[t], env);
      H.topLeftCorner<3, 3>() += wa2 * ra.J_eta.transpose() * ra.J_eta;
      g.head<3>() += wa2 * ra.J_eta.transpose() * ra.e;
      if (use_mag) {
        const auto rm =
            residual_mag(Vector3d::Zero(), q_lin, unit_or_keep(meas.mag[t]), env);
        H.topLeftCorner<3, 3>() += wm2 * rm.J_eta.transpose() * rm.J_eta;
        g.head<3>() += wm2 * rm.J_eta.transpose() * rm.e;
      }
      d = -H.ldlt().solve(g);

      const double slope = g.dot(d);
      const double beta = backtrack_line_search(
          [&](double b) {
            const Quat q_trial = (exp_q(0.5 * b * d.head<3>()) * q_lin).normalized();
            const Vector3d b_trial =
                bias_on ? Vector3d(bias_lin + b * d.tail<3>()) : bias_lin;
            return step.objective(t, q_trial, b_trial, q_pred, bias_prev, P_pred_llt);
          },
          f, slope, settings);
      if (beta == 0.0) {
        trace.converged = false;
        break;
      }
      q_lin = (exp_q(0.5 * beta * d.head<3>()) * q_lin).normalized();
      if (bias_on) bias_lin += beta * d.tail<3>();
      f = step.objective(t, q_lin, bias_lin, q_pred, bias_prev, P_pred_llt);
      if ((beta * d).lpNorm<Eigen::Infinity>() < settings.step_tol) break;
    }

    // Covariance at convergence: inverse of the final approximate Hessian.
    H = P_pred_inv;
    {
      const auto ra = residual_acc(Vector3d::Zero(), q_lin, meas.acc[t], env);
      H.topLeftCorner<3, 3>() += wa2 * ra.J_eta.transpose() * ra.J_eta;
      if (use_mag) {
        const auto rm =
            residual_mag(Vector3d::Zero(), q_lin, unit_or_keep(meas.mag[t]), env);
        H.topLeftCorner<3, 3>() += wm2 * rm.J_eta.transpose() * rm.J_eta;
      }
    }
    P = H.ldlt().solve(Eigen::MatrixXd::Identity(n, n));
    symmetrize(P);

    q_hat = q_lin;
    bias_hat = bias_lin;
    trace.q.push_back(q_hat);
    trace.cov_ori.push_back(P.topLeftCorner<3, 3>());
    if (bias_on) {
      trace.bias.push_back(bias_hat);
      trace.cov_bias.push_back(P.bottomRightCorner<3, 3>());
    }
  }
  trace.iterations = N - 1;
  return trace;
}

// ---------------------------------------------------------------------------
// EKF with quaternion states
// ---------------------------------------------------------------------------

EstimateTrace ekf_quaternion(const MeasurementSeries& meas, const NoiseModel& noise,
                             const Environment& env,
                             const EstimatorOptions& options) {
  const int N = static_cast<int>(meas.size());
  if (N < 2) throw std::invalid_argument("need at least two samples");
  noise.validate();
  const double T = meas.sample_period;
  const bool use_mag = options.use_mag && meas.has_mag();
  const bool bias_on = options.estimate_bias;
  const int n = bias_on ? 7 : 4;
  const int m = use_mag ? 6 : 3;

  EstimateTrace trace;
  trace.sample_period = T;

  Quat q_hat = initial_orientation(meas, env, options);
  Vector3d bias_hat = Vector3d::Zero();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  P.topLeftCorner<4, 4>() = prior_covariances(q_hat, noise).cov_quat;
  if (bias_on) {
    P.bottomRightCorner<3, 3>() =
        noise.sigma_bias_prior * noise.sigma_bias_prior * Matrix3d::Identity();
  }

  const auto record = [&](const Quat& q, const Eigen::MatrixXd& Pq) {
    trace.q.push_back(q);
    trace.cov_ori.push_back(quat_cov_to_eta_cov(q, Pq.topLeftCorner<4, 4>()));
    if (bias_on) {
      trace.bias.push_back(bias_hat);
      trace.cov_bias.push_back(Pq.bottomRightCorner<3, 3>());
    }
  };
  record(q_hat, P);

  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(m, m);
  R.topLeftCorner<3, 3>() = noise.sigma_acc * noise.sigma_acc * Matrix3d::Identity();
  if (use_mag) {
    R.bottomRightCorner<3, 3>() =
        noise.sigma_mag * noise.sigma_mag * Matrix3d::Identity();
  }
  for (int t = 1; t < N; ++t) {
    // Time update. The noise enters inside the step exponential, so its
    // Jacobian carries d exp_q at the actual increment.
    const Vector3d u = 0.5 * T * (meas.gyr[t - 1] - bias_hat);
    const Quat dq = exp_q(u);
    const Mat43 Du = dexp_q(u);
    Eigen::MatrixXd F = Eigen::MatrixXd::Identity(n, n);
    F.topLeftCorner<4, 4>() = right_mult_matrix(dq);
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, bias_on ? 6 : 3);
    G.topLeftCorner<4, 3>() = -0.5 * T * left_mult_matrix(q_hat) * Du;
    if (bias_on) {
      F.topRightCorner<4, 3>() = -0.5 * T * left_mult_matrix(q_hat) * Du;
      G.bottomRightCorner<3, 3>().setIdentity();
    }
    Eigen::MatrixXd Q =
        Eigen::MatrixXd::Zero(bias_on ? 6 : 3, bias_on ? 6 : 3);
    Q.topLeftCorner<3, 3>() =
        noise.sigma_gyr * noise.sigma_gyr * Matrix3d::Identity();
    if (bias_on) {
      Q.bottomRightCorner<3, 3>() =
          noise.sigma_bias_walk * noise.sigma_bias_walk * Matrix3d::Identity();
    }
    q_hat = (q_hat * dq);  // not renormalized here; handled by the update
    P = F * P * F.transpose() + G * Q * G.transpose();
    symmetrize(P);

    // Measurement update with stacked accelerometer (+ magnetometer).
    const Matrix3d Rbn = quat_to_rotmat(q_hat.normalized()).transpose();
    Eigen::VectorXd eps(m);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m, n);
    eps.head<3>() = meas.acc[t] - (-Rbn * env.gravity_n);
    H.block<3, 4>(0, 0) = -dRtv_dq(q_hat, env.gravity_n);
    if (use_mag) {
      const Vector3d ym = unit_or_keep(meas.mag[t]);
      eps.tail<3>() = ym - Rbn * env.mag_field_n;
      H.block<3, 4>(3, 0) = dRtv_dq(q_hat, env.mag_field_n);
    }
    const Eigen::MatrixXd S = H * P * H.transpose() + R;
    const Eigen::MatrixXd K = P * H.transpose() * S.ldlt().solve(
                                  Eigen::MatrixXd::Identity(m, m));
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    x.head<4>() = q_hat.to_vec4();
    if (bias_on) x.tail<3>() = bias_hat;
    x += K * eps;
    P -= K * S * K.transpose();
    symmetrize(P);

    // Renormalize the quaternion and propagate the covariance through the
    // normalization map q -> q/||q||.
    const Vector4d qt = x.head<4>();
    const double qn = qt.norm();
    Eigen::MatrixXd J = Eigen::MatrixXd::Identity(n, n);
    J.topLeftCorner<4, 4>() =
        (Matrix4d::Identity() - qt * qt.transpose() / (qn * qn)) / qn;
    P = J * P * J.transpose();
    symmetrize(P);
    q_hat = Quat::from_vec4(qt / qn);
    if (bias_on) bias_hat = x.tail<3>();

    if (!is_psd(P, P.norm())) {
      trace.converged = false;
    }
    record(q_hat, P);
  }
  trace.iterations = N - 1;
  return trace;
}

// ---------------------------------------------------------------------------
// EKF with orientation-deviation states (multiplicative EKF)
// ---------------------------------------------------------------------------

EstimateTrace ekf_orientation_deviation(const MeasurementSeries& meas,
                                        const NoiseModel& noise,
                                        const Environment& env,
                                        const EstimatorOptions& options) {
  const int N = static_cast<int>(meas.size());
  if (N < 2) throw std::invalid_argument("need at least two samples");
  noise.validate();
  const double T = meas.sample_period;
  const bool use_mag = options.use_mag && meas.has_mag();
  const bool bias_on = options.estimate_bias;
  const int n = bias_on ? 6 : 3;
  const int m = use_mag ? 6 : 3;

  EstimateTrace trace;
  trace.sample_period = T;

  Quat q_lin = initial_orientation(meas, env, options);
  Vector3d bias_hat = Vector3d::Zero();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  P.topLeftCorner<3, 3>() =
      noise.sigma_ori_prior * noise.sigma_ori_prior * Matrix3d::Identity();
  if (bias_on) {
    P.bottomRightCorner<3, 3>() =
        noise.sigma_bias_prior * noise.sigma_bias_prior * Matrix3d::Identity();
  }

  const auto record = [&]() {
    trace.q.push_back(q_lin);
    trace.cov_ori.push_back(P.topLeftCorner<3, 3>());
    if (bias_on) {
      trace.bias.push_back(bias_hat);
      trace.cov_bias.push_back(P.bottomRightCorner<3, 3>());
    }
  };
  record();

  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(m, m);
  R.topLeftCorner<3, 3>() = noise.sigma_acc * noise.sigma_acc * Matrix3d::Identity();
  if (use_mag) {
    R.bottomRightCorner<3, 3>() =
        noise.sigma_mag * noise.sigma_mag * Matrix3d::Identity();
  }

  for (int t = 1; t < N; ++t) {
    // Time update: the linearization point absorbs the propagation.
    const Matrix3d M =
        gyro_step_noise_map(q_lin, 0.5 * T * (meas.gyr[t - 1] - bias_hat));
    q_lin = (q_lin * exp_q(0.5 * T * (meas.gyr[t - 1] - bias_hat))).normalized();
    const Matrix3d GQG_ori =
        T * T * noise.sigma_gyr * noise.sigma_gyr * M * M.transpose();
    if (bias_on) {
      Eigen::MatrixXd F = Eigen::MatrixXd::Identity(n, n);
      F.topRightCorner<3, 3>() = -T * M;
      Eigen::MatrixXd GQG = Eigen::MatrixXd::Zero(n, n);
      GQG.topLeftCorner<3, 3>() = GQG_ori;
      GQG.bottomRightCorner<3, 3>() =
          noise.sigma_bias_walk * noise.sigma_bias_walk * Matrix3d::Identity();
      P = F * P * F.transpose() + GQG;
    } else {
      P += GQG_ori;
    }
    symmetrize(P);

    // Measurement update.
    const Matrix3d Rbn = quat_to_rotmat(q_lin).transpose();
    Eigen::VectorXd eps(m);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m, n);
    eps.head<3>() = meas.acc[t] + Rbn * env.gravity_n;
    H.block<3, 3>(0, 0) = -Rbn * cross_matrix(env.gravity_n);
    if (use_mag) {
      eps.tail<3>() = unit_or_keep(meas.mag[t]) - Rbn * env.mag_field_n;
      H.block<3, 3>(3, 0) = Rbn * cross_matrix(env.mag_field_n);
    }
    const Eigen::MatrixXd S = H * P * H.transpose() + R;
    const Eigen::MatrixXd K =
        P * H.transpose() * S.ldlt().solve(Eigen::MatrixXd::Identity(m, m));
    const Eigen::VectorXd dx = K * eps;
    P -= K * S * K.transpose();
    symmetrize(P);
    if (!is_psd(P, P.norm())) {
      trace.converged = false;
    }

    // Relinearize; the covariance relinearization is the identity.
    q_lin = (exp_q(0.5 * dx.head<3>()) * q_lin).normalized();
    if (bias_on) bias_hat += dx.tail<3>();
    record();
  }
  trace.iterations = N - 1;
  return trace;
}

// ---------------------------------------------------------------------------
// Complementary filter
// ---------------------------------------------------------------------------

EstimateTrace complementary_filter(const MeasurementSeries& meas,
                                   const NoiseModel& noise, const Environment& env,
                                   double alpha, const EstimatorOptions& options) {
  const int N = static_cast<int>(meas.size());
  if (N < 2) throw std::invalid_argument("need at least two samples");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("alpha must lie in (0, 1)");
  }
  noise.validate();
  if (!meas.has_mag() && !options.init_orientation) {
    throw std::invalid_argument("complementary filter needs magnetometer data");
  }
  const double T = meas.sample_period;

  EstimateTrace trace;
  trace.sample_period = T;
  Quat q_hat = initial_orientation(meas, env, options);
  trace.q.push_back(q_hat);

  const double wa = 1.0 / noise.sigma_acc;
  const double wm = 1.0 / noise.sigma_mag;
  const bool use_mag = options.use_mag && meas.has_mag();

  for (int t = 1; t < N; ++t) {
    // Time update by gyro integration.
    q_hat = (q_hat * exp_q(0.5 * T * meas.gyr[t - 1])).normalized();

    // One weighted Gauss-Newton step on the vector-alignment objective.
    const Matrix3d Rbn = quat_to_rotmat(q_hat).transpose();
    const int m = use_mag ? 6 : 3;
    Eigen::VectorXd eps(m);
    Eigen::MatrixXd J(m, 4);
    eps.head<3>() = wa * (meas.acc[t] + Rbn * env.gravity_n);
    J.topRows<3>() = wa * dRtv_dq(q_hat, env.gravity_n);
    if (use_mag) {
      eps.tail<3>() = wm * (unit_or_keep(meas.mag[t]) - Rbn * env.mag_field_n);
      J.bottomRows<3>() = -wm * dRtv_dq(q_hat, env.mag_field_n);
    }
    // J^T J is rank deficient along the quaternion scale direction.
    const Matrix4d JtJ =
        J.transpose() * J + 1e-12 * Matrix4d::Identity();
    const Vector4d step = JtJ.ldlt().solve(J.transpose() * eps);
    const Vector4d q_new = q_hat.to_vec4() - alpha * step;
    q_hat = Quat::from_vec4(q_new).normalized();
    trace.q.push_back(q_hat);
  }
  trace.iterations = N - 1;
  return trace;
}

// ---------------------------------------------------------------------------
// Pose filters: state (p, v, orientation)
// ---------------------------------------------------------------------------

EstimateTrace filter_pose_opt(const MeasurementSeries& meas, const NoiseModel& noise,
                              const Environment& env,
                              const GaussNewtonSettings& settings,
                              const EstimatorOptions& options) {
  const int N = static_cast<int>(meas.size());
  if (N < 2) throw std::invalid_argument("need at least two samples");
  if (!meas.has_pos()) throw std::invalid_argument("pose estimation needs positions");
  noise.validate();
  const double T = meas.sample_period;

  EstimateTrace trace;
  trace.sample_period = T;

  Quat q_hat = options.init_orientation ? options.init_orientation->normalized()
                                        : Quat::identity();
  Vector3d p_hat = meas.pos[0];
  Vector3d v_hat = Vector3d::Zero();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(9, 9);
  P.block<3, 3>(0, 0) = noise.sigma_pos * noise.sigma_pos * Matrix3d::Identity();
  P.block<3, 3>(3, 3) =
      noise.sigma_vel_prior * noise.sigma_vel_prior * Matrix3d::Identity();
  P.block<3, 3>(6, 6) =
      noise.sigma_ori_prior * noise.sigma_ori_prior * Matrix3d::Identity();

  const auto record = [&]() {
    trace.q.push_back(q_hat);
    trace.p.push_back(p_hat);
    trace.v.push_back(v_hat);
    trace.cov_ori.push_back(P.block<3, 3>(6, 6));
    trace.cov_pos.push_back(P.block<3, 3>(0, 0));
  };
  record();

  const double wp2 = 1.0 / (noise.sigma_pos * noise.sigma_pos);

  for (int t = 1; t < N; ++t) {
    // Time update.
    const Matrix3d Rnb = quat_to_rotmat(q_hat);
    const Vector3d acc_n = Rnb * meas.acc[t - 1] + env.gravity_n;
    const Vector3d p_pred = p_hat + T * v_hat + 0.5 * T * T * acc_n;
    const Vector3d v_pred = v_hat + T * acc_n;
    const Matrix3d M = gyro_step_noise_map(q_hat, 0.5 * T * meas.gyr[t - 1]);
    const Quat q_pred = (q_hat * exp_q(0.5 * T * meas.gyr[t - 1])).normalized();

    Eigen::MatrixXd F = Eigen::MatrixXd::Identity(9, 9);
    F.block<3, 3>(0, 3) = T * Matrix3d::Identity();
    F.block<3, 3>(0, 6) = -0.5 * T * T * cross_matrix(Rnb * meas.acc[t - 1]);
    F.block<3, 3>(3, 6) = -T * cross_matrix(Rnb * meas.acc[t - 1]);
    Eigen::MatrixXd GQG = Eigen::MatrixXd::Zero(9, 9);
    const double sa2 = noise.sigma_acc * noise.sigma_acc;
    GQG.block<3, 3>(0, 0) = 0.25 * T * T * T * T * sa2 * Matrix3d::Identity();
    GQG.block<3, 3>(3, 3) = T * T * sa2 * Matrix3d::Identity();
    GQG.block<3, 3>(6, 6) =
        T * T * noise.sigma_gyr * noise.sigma_gyr * M * M.transpose();
    Eigen::MatrixXd P_pred = F * P * F.transpose() + GQG;
    symmetrize(P_pred);
    const Eigen::LLT<Eigen::MatrixXd> P_llt(P_pred);
    const Eigen::MatrixXd P_inv = P_llt.solve(Eigen::MatrixXd::Identity(9, 9));

    // Per-step Gauss-Newton over (p, v, eta) with the arrival cost.
    Vector3d p_lin = p_pred, v_lin = v_pred;
    Quat q_lin = q_pred;
    const auto objective = [&](const Vector3d& p, const Vector3d& v, const Quat& q) {
      Eigen::VectorXd ef(9);
      ef.segment<3>(0) = p - p_pred;
      ef.segment<3>(3) = v - v_pred;
      ef.segment<3>(6) = -2.0 * log_q(q_pred * q.conj());
      double f = P_llt.matrixL().solve(ef).squaredNorm();
      f += wp2 * (meas.pos[t] - p).squaredNorm();
      return 0.5 * f;
    };
    double f = objective(p_lin, v_lin, q_lin);

    Eigen::MatrixXd H(9, 9);
    Eigen::VectorXd g(9), d(9);
    for (int k = 0; k < settings.max_iterations; ++k) {
      Eigen::VectorXd ef(9);
      ef.segment<3>(0) = p_lin - p_pred;
      ef.segment<3>(3) = v_lin - v_pred;
      ef.segment<3>(6) = -2.0 * log_q(q_pred * q_lin.conj());
      H = P_inv;
      g = P_inv * ef;
      const auto rp = residual_pos(p_lin, meas.pos[t]);
      H.block<3, 3>(0, 0) += wp2 * rp.J_p.transpose() * rp.J_p;
      g.segment<3>(0) += wp2 * rp.J_p.transpose() * rp.e;
      d = -H.ldlt().solve(g);

      const double beta = backtrack_line_search(
          [&](double b) {
            return objective(p_lin + b * d.segment<3>(0), v_lin + b * d.segment<3>(3),
                             (exp_q(0.5 * b * d.segment<3>(6)) * q_lin).normalized());
          },
          f, g.dot(d), settings);
      if (beta == 0.0) {
        trace.converged = false;
        break;
      }
      p_lin += beta * d.segment<3>(0);
      v_lin += beta * d.segment<3>(3);
      q_lin = (exp_q(0.5 * beta * d.segment<3>(6)) * q_lin).normalized();
      f = objective(p_lin, v_lin, q_lin);
      if ((beta * d).lpNorm<Eigen::Infinity>() < settings.step_tol) break;
    }

    H = P_inv;
    H.block<3, 3>(0, 0) += wp2 * Matrix3d::Identity();
    P = H.ldlt().solve(Eigen::MatrixXd::Identity(9, 9));
    symmetrize(P);
    p_hat = p_lin;
    v_hat = v_lin;
    q_hat = q_lin;
    record();
  }
  trace.iterations = N - 1;
  return trace;
}

EstimateTrace ekf_pose_deviation(const MeasurementSeries& meas,
                                 const NoiseModel& noise, const Environment& env,
                                 const EstimatorOptions& options) {
  const int N = static_cast<int>(meas.size());
  if (N < 2) throw std::invalid_argument("need at least two samples");
  if (!meas.has_pos()) throw std::invalid_argument("pose estimation needs positions");
  noise.validate();
  const double T = meas.sample_period;

  EstimateTrace trace;
  trace.sample_period = T;

  Quat q_lin = options.init_orientation ? options.init_orientation->normalized()
                                        : Quat::identity();
  Vector3d p_hat = meas.pos[0];
  Vector3d v_hat = Vector3d::Zero();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(9, 9);
  P.block<3, 3>(0, 0) = noise.sigma_pos * noise.sigma_pos * Matrix3d::Identity();
  P.block<3, 3>(3, 3) =
      noise.sigma_vel_prior * noise.sigma_vel_prior * Matrix3d::Identity();
  P.block<3, 3>(6, 6) =
      noise.sigma_ori_prior * noise.sigma_ori_prior * Matrix3d::Identity();

  const auto record = [&]() {
    trace.q.push_back(q_lin);
    trace.p.push_back(p_hat);
    trace.v.push_back(v_hat);
    trace.cov_ori.push_back(P.block<3, 3>(6, 6));
    trace.cov_pos.push_back(P.block<3, 3>(0, 0));
  };
  record();

  const Matrix3d Rm = noise.sigma_pos * noise.sigma_pos * Matrix3d::Identity();

  for (int t = 1; t < N; ++t) {
    const Matrix3d Rnb = quat_to_rotmat(q_lin);
    const Vector3d acc_n = Rnb * meas.acc[t - 1] + env.gravity_n;
    const Matrix3d M = gyro_step_noise_map(q_lin, 0.5 * T * meas.gyr[t - 1]);
    Eigen::MatrixXd F = Eigen::MatrixXd::Identity(9, 9);
    F.block<3, 3>(0, 3) = T * Matrix3d::Identity();
    F.block<3, 3>(0, 6) = -0.5 * T * T * cross_matrix(Rnb * meas.acc[t - 1]);
    F.block<3, 3>(3, 6) = -T * cross_matrix(Rnb * meas.acc[t - 1]);
    Eigen::MatrixXd GQG = Eigen::MatrixXd::Zero(9, 9);
    const double sa2 = noise.sigma_acc * noise.sigma_acc;
    GQG.block<3, 3>(0, 0) = 0.25 * T * T * T * T * sa2 * Matrix3d::Identity();
    GQG.block<3, 3>(3, 3) = T * T * sa2 * Matrix3d::Identity();
    GQG.block<3, 3>(6, 6) =
        T * T * noise.sigma_gyr * noise.sigma_gyr * M * M.transpose();

    p_hat += T * v_hat + 0.5 * T * T * acc_n;
    v_hat += T * acc_n;
    q_lin = (q_lin * exp_q(0.5 * T * meas.gyr[t - 1])).normalized();
    P = F * P * F.transpose() + GQG;
    symmetrize(P);

    // Position measurement update.
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(3, 9);
    H.block<3, 3>(0, 0).setIdentity();
    const Vector3d eps = meas.pos[t] - p_hat;
    const Eigen::MatrixXd S = H * P * H.transpose() + Rm;
    const Eigen::MatrixXd K = P * H.transpose() * S.ldlt().solve(Matrix3d::Identity());
    const Eigen::VectorXd dx = K * eps;
    P -= K * S * K.transpose();
    symmetrize(P);
    if (!is_psd(P, P.norm())) trace.converged = false;

    p_hat += dx.segment<3>(0);
    v_hat += dx.segment<3>(3);
    q_lin = (exp_q(0.5 * dx.segment<3>(6)) * q_lin).normalized();
    record();
  }
  trace.iterations = N - 1;
  return trace;
}

EstimateTrace ekf_pose_quaternion(const MeasurementSeries& meas,
                                  const NoiseModel& noise, const Environment& env,
                                  const EstimatorOptions& options) {
  const int N = static_cast<int>(meas.size());
  if (N < 2) throw std::invalid_argument("need at least two samples");
  if (!meas.has_pos()) throw std::invalid_argument("pose estimation needs positions");
  noise.validate();
  const double T = meas.sample_period;

  EstimateTrace trace;
  trace.sample_period = T;

  Quat q_hat = options.init_orientation ? options.init_orientation->normalized()
                                        : Quat::identity();
  Vector3d p_hat = meas.pos[0];
  Vector3d v_hat = Vector3d::Zero();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(10, 10);
  P.block<3, 3>(0, 0) = noise.sigma_pos * noise.sigma_pos * Matrix3d::Identity();
  P.block<3, 3>(3, 3) =
      noise.sigma_vel_prior * noise.sigma_vel_prior * Matrix3d::Identity();
  P.block<4, 4>(6, 6) = prior_covariances(q_hat, noise).cov_quat;

  const auto record = [&]() {
    trace.q.push_back(q_hat);
    trace.p.push_back(p_hat);
    trace.v.push_back(v_hat);
    trace.cov_ori.push_back(quat_cov_to_eta_cov(q_hat, P.block<4, 4>(6, 6)));
    trace.cov_pos.push_back(P.block<3, 3>(0, 0));
  };
  record();

  const Matrix3d Rm = noise.sigma_pos * noise.sigma_pos * Matrix3d::Identity();

  for (int t = 1; t < N; ++t) {
    const Vector3d acc_n = quat_to_rotmat(q_hat) * meas.acc[t - 1] + env.gravity_n;
    const Vector3d u = 0.5 * T * meas.gyr[t - 1];
    Eigen::MatrixXd F = Eigen::MatrixXd::Identity(10, 10);
    F.block<3, 3>(0, 3) = T * Matrix3d::Identity();
    F.block<3, 4>(0, 6) = 0.5 * T * T * dRv_dq(q_hat, meas.acc[t - 1]);
    F.block<3, 4>(3, 6) = T * dRv_dq(q_hat, meas.acc[t - 1]);
    F.block<4, 4>(6, 6) = right_mult_matrix(exp_q(u));
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(10, 9);
    G.block<3, 3>(0, 0) = 0.5 * T * T * Matrix3d::Identity();
    G.block<3, 3>(3, 3) = T * Matrix3d::Identity();
    G.block<4, 3>(6, 6) = -0.5 * T * left_mult_matrix(q_hat) * dexp_q(u);
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(9, 9);
    const double sa2 = noise.sigma_acc * noise.sigma_acc;
    Q.block<3, 3>(0, 0) = sa2 * Matrix3d::Identity();
    Q.block<3, 3>(3, 3) = sa2 * Matrix3d::Identity();
    Q.block<3, 3>(6, 6) = noise.sigma_gyr * noise.sigma_gyr * Matrix3d::Identity();

    p_hat += T * v_hat + 0.5 * T * T * acc_n;
    v_hat += T * acc_n;
    q_hat = q_hat * exp_q(0.5 * T * meas.gyr[t - 1]);
    P = F * P * F.transpose() + G * Q * G.transpose();
    symmetrize(P);

    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(3, 10);
    H.block<3, 3>(0, 0).setIdentity();
    const Vector3d eps = meas.pos[t] - p_hat;
    const Eigen::MatrixXd S = H * P * H.transpose() + Rm;
    const Eigen::MatrixXd K = P * H.transpose() * S.ldlt().solve(Matrix3d::Identity());
    const Eigen::VectorXd dx = K * eps;
    P -= K * S * K.transpose();
    symmetrize(P);

    p_hat += dx.segment<3>(0);
    v_hat += dx.segment<3>(3);
    Vector4d qt = q_hat.to_vec4() + dx.segment<4>(6);
    const double qn = qt.norm();
    Eigen::MatrixXd J = Eigen::MatrixXd::Identity(10, 10);
    J.block<4, 4>(6, 6) =
        (Matrix4d::Identity() - qt * qt.transpose() / (qn * qn)) / qn;
    P = J * P * J.transpose();
    symmetrize(P);
    q_hat = Quat::from_vec4(qt / qn);
    if (!is_psd(P, P.norm())) trace.converged = false;
    record();
  }
  trace.iterations = N - 1;
  return trace;
}

}  // namespace fusion
