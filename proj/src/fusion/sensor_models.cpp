#include "fusion/sensor_models.hpp"

#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace fusion {

namespace {
constexpr double kCollinearTol = 1e-6;

double alignment_objective(const Quat& q, const Vector3d& gn, const Vector3d& gb,
                           const Vector3d& mn, const Vector3d& mb) {
  return (gn - rotate(q, gb)).squaredNorm() + (mn - rotate(q, mb)).squaredNorm();
}
}  // namespace

void NoiseModel::validate() const {
  const double all[] = {sigma_gyr, sigma_acc, sigma_mag, sigma_pos,
                        sigma_ori_prior, sigma_vel_prior, sigma_bias_prior,
                        sigma_bias_walk};
  for (double s : all) {
    if (!(s > 0.0)) {
      throw std::invalid_argument("noise model entries must be strictly positive");
    }
  }
}

Quat quest_initial_orientation(const Vector3d& acc_sample,
                               const Vector3d& mag_sample,
                               const Environment& env) {
  if (acc_sample.norm() <= 1.0) {
    throw std::domain_error("degenerate-input: accelerometer sample too small");
  }
  if (!(mag_sample.norm() > 0.0)) {
    throw std::domain_error("degenerate-input: zero magnetometer sample");
  }
  (void)env;
  const Vector3d g_n(0.0, 0.0, 1.0);
  const Vector3d g_b = acc_sample.normalized();
  const Vector3d m_n(1.0, 0.0, 0.0);
  const Vector3d m_b = g_b.cross(mag_sample.normalized().cross(g_b));
  if (m_b.norm() < kCollinearTol) {
    throw std::domain_error(
        "degenerate-input: gravity and magnetic directions are collinear");
  }

  const Matrix4d A = -left_mult_matrix(Quat(0.0, g_n)) * right_mult_matrix(Quat(0.0, g_b)) -
                     left_mult_matrix(Quat(0.0, m_n)) * right_mult_matrix(Quat(0.0, m_b));
  Eigen::SelfAdjointEigenSolver<Matrix4d> eig(0.5 * (A + A.transpose()));

  // Pick the eigenvector that actually minimizes the alignment objective;
  // immune to sign conventions in the quadratic form.
  Quat best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 4; ++i) {
    const Quat cand = Quat::from_vec4(eig.eigenvectors().col(i)).normalized();
    const double obj = alignment_objective(cand, g_n, g_b, m_n, m_b);
    if (obj < best_obj) {
      best_obj = obj;
      best = cand;
    }
  }
  return best;
}

OrientationPrior prior_covariances(const Quat& q_init, const NoiseModel& noise) {
  require_unit(q_init);
  OrientationPrior prior;
  const double s2 = noise.sigma_ori_prior * noise.sigma_ori_prior;
  prior.cov_eta = s2 * Matrix3d::Identity();
  const Mat43 D = dexp_q(Vector3d::Zero());
  prior.cov_quat = 0.25 * right_mult_matrix(q_init) * D * prior.cov_eta *
                   D.transpose() * right_mult_matrix(q_init.conj());
  return prior;
}

PriorResidual residual_prior_orientation(const Vector3d& eta1, const Quat& q_lin,
                                         const Quat& q_init) {
  PriorResidual r;
  const Quat rel = q_lin * q_init.conj();
  const Quat arg = exp_q(0.5 * eta1) * rel;
  r.e = 2.0 * log_q(arg);
  r.J_eta = dlog_q(arg) * right_mult_matrix(rel) * dexp_q(0.5 * eta1);
  return r;
}

GyrDynResidual residual_gyr_dynamics(const Vector3d& eta_t, const Vector3d& eta_t1,
                                     const Quat& q_lin_t, const Quat& q_lin_t1,
                                     const Vector3d& y_gyr, double T,
                                     const Vector3d& bias) {
  GyrDynResidual r;
  const Quat bn_t = (exp_q(0.5 * eta_t) * q_lin_t).conj();
  const Quat nb_t1 = exp_q(0.5 * eta_t1) * q_lin_t1;
  const Quat arg = bn_t * nb_t1;
  r.e = (2.0 / T) * log_q(arg) - (y_gyr - bias);

  const Mat34 Dl = dlog_q(arg);
  const Matrix4d Lbn = left_mult_matrix(q_lin_t.conj());
  const Matrix4d Rnb1 = right_mult_matrix(q_lin_t1);
  const Quat et = exp_q(0.5 * eta_t);
  const Quat et1 = exp_q(0.5 * eta_t1);
  // arg = q_lin_t^c (x) et^c (x) et1 (x) q_lin_t1, differentiated through
  // each exponential in place.
  r.J_eta_t = (1.0 / T) * Dl * Lbn * Rnb1 * right_mult_matrix(et1) * dconj() *
              dexp_q(0.5 * eta_t);
  r.J_eta_t1 = (1.0 / T) * Dl * Lbn * Rnb1 * left_mult_matrix(et.conj()) *
               dexp_q(0.5 * eta_t1);
  r.J_bias = Matrix3d::Identity();
  return r;
}

VectorObsResidual residual_acc(const Vector3d& eta, const Quat& q_lin,
                               const Vector3d& y_acc, const Environment& env) {
  VectorObsResidual r;
  const Matrix3d Rbn_lin = quat_to_rotmat(q_lin).transpose();
  const Matrix3d E = exp_R(-eta);
  r.e = y_acc + Rbn_lin * E * env.gravity_n;
  r.J_eta = Rbn_lin * E * cross_matrix(env.gravity_n) * so3_right_jacobian(-eta);
  return r;
}

VectorObsResidual residual_mag(const Vector3d& eta, const Quat& q_lin,
                               const Vector3d& y_mag, const Environment& env) {
  VectorObsResidual r;
  const Matrix3d Rbn_lin = quat_to_rotmat(q_lin).transpose();
  const Matrix3d E = exp_R(-eta);
  r.e = y_mag - Rbn_lin * E * env.mag_field_n;
  r.J_eta = -Rbn_lin * E * cross_matrix(env.mag_field_n) * so3_right_jacobian(-eta);
  return r;
}

PoseDynResidual residual_pose_dynamics(const Vector3d& p_t, const Vector3d& p_t1,
                                       const Vector3d& v_t, const Vector3d& v_t1,
                                       const Vector3d& eta_t, const Quat& q_lin_t,
                                       const Vector3d& y_acc, double T,
                                       const Environment& env) {
  PoseDynResidual r;
  const Matrix3d Rnb = exp_R(eta_t) * quat_to_rotmat(q_lin_t);
  const Vector3d acc_n = Rnb * y_acc + env.gravity_n;
  r.e_p = (2.0 / (T * T)) * (p_t1 - p_t - T * v_t) - acc_n;
  r.e_v = (1.0 / T) * (v_t1 - v_t) - acc_n;

  // d(-R^nb y_a)/d eta = exp_R(eta) [R_lin^nb y_a x] Jr(eta); [R_lin y_a x] at 0.
  const Matrix3d J_eta = exp_R(eta_t) *
                         cross_matrix(quat_to_rotmat(q_lin_t) * y_acc) *
                         so3_right_jacobian(eta_t);
  r.Jp_p_t1 = (2.0 / (T * T)) * Matrix3d::Identity();
  r.Jp_p_t = -r.Jp_p_t1;
  r.Jp_v_t = -(2.0 / T) * Matrix3d::Identity();
  r.Jp_eta = J_eta;
  r.Jv_v_t1 = (1.0 / T) * Matrix3d::Identity();
  r.Jv_v_t = -r.Jv_v_t1;
  r.Jv_eta = J_eta;
  return r;
}

PosResidual residual_pos(const Vector3d& p_t, const Vector3d& y_pos) {
  PosResidual r;
  r.e = y_pos - p_t;
  r.J_p = -Matrix3d::Identity();
  return r;
}

Matrix3d gyro_step_noise_map(const Quat& q_from, const Vector3d& u) {
  const Quat q_pred = q_from * exp_q(u);
  const Eigen::Matrix<double, 4, 3> D =
      left_mult_matrix(q_from) * right_mult_matrix(q_pred.conj()) * dexp_q(u);
  return D.bottomRows<3>();
}

}  // namespace fusion
