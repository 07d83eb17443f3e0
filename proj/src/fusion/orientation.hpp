// Quaternion algebra, rotation parametrizations and the exp/log maps
// between rotation vectors and orientations.
#pragma once

#include <Eigen/Dense>

namespace fusion {

using Eigen::Matrix3d;
using Eigen::Matrix4d;
using Eigen::Vector3d;
using Eigen::Vector4d;
using Mat34 = Eigen::Matrix<double, 3, 4>;
using Mat43 = Eigen::Matrix<double, 4, 3>;

// Unit quaternion q = (q0, qv). A q^nb rotates body-frame vectors into the
// navigation frame via rotate(). Double cover: q and -q are the same rotation.
struct Quat {
  double w = 1.0;
  Vector3d vec = Vector3d::Zero();

  Quat() = default;
  Quat(double q0, double q1, double q2, double q3) : w(q0), vec(q1, q2, q3) {}
  Quat(double q0, const Vector3d& qv) : w(q0), vec(qv) {}
  static Quat identity() { return Quat(); }
  static Quat from_vec4(const Vector4d& v) { return Quat(v(0), v.segment<3>(1)); }

  Vector4d to_vec4() const { return Vector4d(w, vec(0), vec(1), vec(2)); }
  Quat conj() const { return Quat(w, -vec); }
  double norm() const { return std::sqrt(w * w + vec.squaredNorm()); }
  Quat normalized() const {
    const double n = norm();
    return Quat(w / n, vec / n);
  }
  // Flips the sign so that q0 >= 0; only for comparison/logging boundaries.
  Quat canonical() const { return w < 0.0 ? Quat(-w, -vec) : *this; }
};

// Hamilton product p (x) q; total on arbitrary 4-vectors (vector quaternions
// included), norm is multiplicative.
Quat operator*(const Quat& p, const Quat& q);

Matrix4d left_mult_matrix(const Quat& p);   // p (x) q = p^L q
Matrix4d right_mult_matrix(const Quat& q);  // p (x) q = q^R p

Matrix3d cross_matrix(const Vector3d& u);   // [u x] v = u x v

// Rotates v by q: vector part of q (x) v_bar (x) q^c. Requires unit q.
Vector3d rotate(const Quat& q, const Vector3d& v);

// q(n, alpha) = (cos(alpha/2), -n sin(alpha/2)); matches the rotation matrix
// I - sin(alpha)[n x] + (1 - cos(alpha))[n x]^2.
Quat axis_angle_to_quat(const Vector3d& axis, double angle);

// exp/log between rotation vectors and orientations. exp_q(u) encodes a
// rotation by 2*||u||; estimators call exp_q(eta / 2).
Quat exp_q(const Vector3d& u);
Matrix3d exp_R(const Vector3d& eta);
// log_q canonicalizes the sign (q0 >= 0) before evaluating, so outputs stay
// in ||.|| <= pi/2; log_q(exp_q(u)) == u for ||u|| < pi/2.
Vector3d log_q(const Quat& q);
Vector3d log_R(const Matrix3d& R);

Matrix3d quat_to_rotmat(const Quat& q);
Quat rotmat_to_quat(const Matrix3d& R);

// Euler angles in the (z, y, x) convention: yaw (heading), pitch, roll.
struct EulerAngles {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
};

Matrix3d euler_to_rotmat(const EulerAngles& e);
EulerAngles rotmat_to_euler(const Matrix3d& R);

// Validation helpers; throw std::invalid_argument past the stated tolerance.
void require_unit(const Quat& q, double tol = 1e-6);
void require_rotation(const Matrix3d& R, double tol = 1e-6);

// Derivatives used to assemble residual Jacobians by the chain rule. All are
// exact derivatives of the maps above (not small-angle approximations).
Mat43 dexp_q(const Vector3d& u);            // d exp_q(u) / du
Mat34 dlog_q(const Quat& q);                // d log_q(q) / dq (sign-aware)
Matrix4d dconj();                           // d q^c / d q = diag(1, -1, -1, -1)
Mat34 dRv_dq(const Quat& q, const Vector3d& v);   // d (R(q) v) / dq
Mat34 dRtv_dq(const Quat& q, const Vector3d& v);  // d (R(q)^T v) / dq

// Right Jacobian of SO(3): d exp_R([eta x]) along the rotation-vector chart.
Matrix3d so3_right_jacobian(const Vector3d& eta);

}  // namespace fusion
