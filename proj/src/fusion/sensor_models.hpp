// Measurement models: residuals with analytic Jacobians for the orientation
// and pose state-space models, plus the vector-observation initial
// orientation (QUEST) and the priors built from it.
#pragma once

#include "fusion/types.hpp"

namespace fusion {

// Initial orientation from the first accelerometer and magnetometer samples:
// the unit quaternion best aligning the measured gravity/magnetic directions
// with their navigation-frame counterparts. The magnetometer is used for
// heading only (projected onto the horizontal plane). Throws
// std::domain_error when the projected horizontal component is degenerate
// (magnetic pole case).
Quat quest_initial_orientation(const Vector3d& acc_sample,
                               const Vector3d& mag_sample,
                               const Environment& env);

// Prior covariances for the initial orientation: the rotation-vector form
// sigma^2 I3 and the quaternion form obtained by the quarter-scaled
// right-multiplication sandwich.
struct OrientationPrior {
  Matrix3d cov_eta;
  Matrix4d cov_quat;
};
OrientationPrior prior_covariances(const Quat& q_init, const NoiseModel& noise);

// Residuals carry the error value, Jacobian blocks w.r.t. the state blocks
// they touch, and the scalar inverse-covariance factor 1/sigma.
struct PriorResidual {
  Vector3d e;
  Matrix3d J_eta;
};

struct GyrDynResidual {
  Vector3d e;
  Matrix3d J_eta_t;
  Matrix3d J_eta_t1;
  Matrix3d J_bias;  // identity when a bias state is present
};

struct VectorObsResidual {
  Vector3d e;
  Matrix3d J_eta;
};

struct PoseDynResidual {
  Vector3d e_p;  // position propagation
  Vector3d e_v;  // velocity propagation
  Matrix3d Jp_p_t, Jp_p_t1, Jp_v_t, Jp_eta;
  Matrix3d Jv_v_t, Jv_v_t1, Jv_eta;
};

struct PosResidual {
  Vector3d e;
  Matrix3d J_p;
};

// e = 2 log_q(exp_q(eta1/2) (x) q_lin (x) q_init^c); zero when the
// linearization point coincides with the prior mean.
PriorResidual residual_prior_orientation(const Vector3d& eta1, const Quat& q_lin,
                                         const Quat& q_init);

// e = (2/T) log_q(q_t^bn (x) q_{t+1}^nb) - (y_gyr - bias) with
// q^nb = exp_q(eta/2) (x) q_lin on both sides.
GyrDynResidual residual_gyr_dynamics(const Vector3d& eta_t, const Vector3d& eta_t1,
                                     const Quat& q_lin_t, const Quat& q_lin_t1,
                                     const Vector3d& y_gyr, double T,
                                     const Vector3d& bias = Vector3d::Zero());

// e_a = y_acc + R_lin^bn exp_R(eta)^T g^n; zero for a stationary, consistent
// sample. Jacobian is exact at every eta (R^bn [g x] at eta = 0).
VectorObsResidual residual_acc(const Vector3d& eta, const Quat& q_lin,
                               const Vector3d& y_acc, const Environment& env);

// e_m = y_mag - R_lin^bn exp_R(eta)^T m^n; the caller normalizes y_mag.
VectorObsResidual residual_mag(const Vector3d& eta, const Quat& q_lin,
                               const Vector3d& y_mag, const Environment& env);

// Position/velocity propagation residuals of the inertial-as-input dynamics:
// e_p = (2/T^2)(p_{t+1} - p_t - T v_t) - R^nb y_acc - g^n,
// e_v = (1/T)(v_{t+1} - v_t) - R^nb y_acc - g^n.
PoseDynResidual residual_pose_dynamics(const Vector3d& p_t, const Vector3d& p_t1,
                                       const Vector3d& v_t, const Vector3d& v_t1,
                                       const Vector3d& eta_t, const Quat& q_lin_t,
                                       const Vector3d& y_acc, double T,
                                       const Environment& env);

// e = y_pos - p_t.
PosResidual residual_pos(const Vector3d& p_t, const Vector3d& y_pos);

// Exact sensitivity of the propagated orientation deviation to rotation-
// vector perturbations of the step: with q_pred = q_from (x) exp_q(u) and a
// perturbed step exp_q(u + w/2), the navigation-frame deviation of the
// result is M w + O(||w||^2), M = gyro_step_noise_map(q_from, u). For a
// gyro noise entering as exp_q(u - T/2 e) the Jacobian is -T M. Reduces to
// the rotation matrix of q_pred to first order in ||u||.
Matrix3d gyro_step_noise_map(const Quat& q_from, const Vector3d& u);

}  // namespace fusion
