#include "fusion/orientation.hpp"

#include <cmath>
#include <stdexcept>

namespace fusion {

namespace {
constexpr double kExpSmallAngle = 1e-8;   // exp small-angle branch
constexpr double kLogZeroVector = 1e-12;  // log zero-vector branch
constexpr double kGimbalLock = 1e-9;      // |R13| = 1 within this
}  // namespace

Quat operator*(const Quat& p, const Quat& q) {
  return Quat(p.w * q.w - p.vec.dot(q.vec),
              p.w * q.vec + q.w * p.vec + p.vec.cross(q.vec));
}

Matrix4d left_mult_matrix(const Quat& p) {
  Matrix4d L;
  L(0, 0) = p.w;
  L.block<1, 3>(0, 1) = -p.vec.transpose();
  L.block<3, 1>(1, 0) = p.vec;
  L.block<3, 3>(1, 1) = p.w * Matrix3d::Identity() + cross_matrix(p.vec);
  return L;
}

Matrix4d right_mult_matrix(const Quat& q) {
  Matrix4d R;
  R(0, 0) = q.w;
  R.block<1, 3>(0, 1) = -q.vec.transpose();
  R.block<3, 1>(1, 0) = q.vec;
  R.block<3, 3>(1, 1) = q.w * Matrix3d::Identity() - cross_matrix(q.vec);
  return R;
}

Matrix3d cross_matrix(const Vector3d& u) {
  Matrix3d m;
  m << 0.0, -u(2), u(1),
       u(2), 0.0, -u(0),
      -u(1), u(0), 0.0;
  return m;
}

Vector3d rotate(const Quat& q, const Vector3d& v) {
  require_unit(q);
  const Quat vbar(0.0, v);
  return (q * vbar * q.conj()).vec;
}

Quat axis_angle_to_quat(const Vector3d& axis, double angle) {
  return Quat(std::cos(0.5 * angle), -axis * std::sin(0.5 * angle));
}

Quat exp_q(const Vector3d& u) {
  const double n = u.norm();
  if (n < kExpSmallAngle) {
    return Quat(1.0, u).normalized();
  }
  return Quat(std::cos(n), (std::sin(n) / n) * u);
}

Matrix3d exp_R(const Vector3d& eta) {
  const double n = eta.norm();
  if (n < kExpSmallAngle) {
    return Matrix3d::Identity() + cross_matrix(eta);
  }
  const Matrix3d K = cross_matrix(eta / n);
  return Matrix3d::Identity() + std::sin(n) * K + (1.0 - std::cos(n)) * K * K;
}

Vector3d log_q(const Quat& q_in) {
  require_unit(q_in);
  const Quat q = q_in.canonical();
  const double s = q.vec.norm();
  if (s < kLogZeroVector) {
    return Vector3d::Zero();
  }
  return (std::atan2(s, q.w) / s) * q.vec;
}

Vector3d log_R(const Matrix3d& R) {
  require_rotation(R);
  // Inverse of exp_R via the quaternion chart; equals the matrix logarithm
  // components (log R)_32, (log R)_13, (log R)_21 for rotation angles < pi.
  return 2.0 * log_q(rotmat_to_quat(R));
}

Matrix3d quat_to_rotmat(const Quat& q) {
  require_unit(q);
  Matrix3d R;
  const double q0 = q.w, q1 = q.vec(0), q2 = q.vec(1), q3 = q.vec(2);
  R << 2 * q0 * q0 + 2 * q1 * q1 - 1, 2 * q1 * q2 - 2 * q0 * q3, 2 * q1 * q3 + 2 * q0 * q2,
       2 * q1 * q2 + 2 * q0 * q3, 2 * q0 * q0 + 2 * q2 * q2 - 1, 2 * q2 * q3 - 2 * q0 * q1,
       2 * q1 * q3 - 2 * q0 * q2, 2 * q2 * q3 + 2 * q0 * q1, 2 * q0 * q0 + 2 * q3 * q3 - 1;
  return R;
}

Quat rotmat_to_quat(const Matrix3d& R) {
  require_rotation(R);
  const double tr = R.trace();
  Quat q;
  if (tr > 0.0) {
    const double q0 = 0.5 * std::sqrt(1.0 + tr);
    q = Quat(q0, Vector3d(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1)) / (4.0 * q0));
  } else {
    // Largest-diagonal branch: stable when 1 + tr is near zero.
    int i = 0;
    if (R(1, 1) > R(0, 0)) i = 1;
    if (R(2, 2) > R(i, i)) i = 2;
    const int j = (i + 1) % 3, k = (i + 2) % 3;
    const double s = std::sqrt(R(i, i) - R(j, j) - R(k, k) + 1.0);
    Vector3d qv;
    qv(i) = 0.5 * s;
    qv(j) = (R(j, i) + R(i, j)) / (2.0 * s);
    qv(k) = (R(k, i) + R(i, k)) / (2.0 * s);
    q = Quat((R(k, j) - R(j, k)) / (2.0 * s), qv);
  }
  return q.normalized();
}

Matrix3d euler_to_rotmat(const EulerAngles& e) {
  const double cps = std::cos(e.yaw), sps = std::sin(e.yaw);
  const double cth = std::cos(e.pitch), sth = std::sin(e.pitch);
  const double cph = std::cos(e.roll), sph = std::sin(e.roll);
  Matrix3d Rz, Ry, Rx;
  Rz << cps, sps, 0, -sps, cps, 0, 0, 0, 1;
  Ry << cth, 0, -sth, 0, 1, 0, sth, 0, cth;
  Rx << 1, 0, 0, 0, cph, sph, 0, -sph, cph;
  return Rx * Ry * Rz;
}

EulerAngles rotmat_to_euler(const Matrix3d& R) {
  require_rotation(R);
  EulerAngles e;
  if (std::abs(std::abs(R(0, 2)) - 1.0) < kGimbalLock) {
    // Gimbal lock: only yaw -/+ roll observable; put it all in yaw.
    e.pitch = R(0, 2) < 0.0 ? M_PI / 2 : -M_PI / 2;
    e.roll = 0.0;
    e.yaw = std::atan2(-R(1, 0), R(1, 1));
  } else {
    e.yaw = std::atan2(R(0, 1), R(0, 0));
    e.pitch = -std::asin(R(0, 2));
    e.roll = std::atan2(R(1, 2), R(2, 2));
  }
  return e;
}

void require_unit(const Quat& q, double tol) {
  if (std::abs(q.norm() - 1.0) > tol) {
    throw std::invalid_argument("quaternion is not unit norm");
  }
}

void require_rotation(const Matrix3d& R, double tol) {
  if ((R * R.transpose() - Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol ||
      std::abs(R.determinant() - 1.0) > tol) {
    throw std::invalid_argument("matrix is not a rotation");
  }
}

Mat43 dexp_q(const Vector3d& u) {
  Mat43 D;
  const double n = u.norm();
  if (n < 1e-6) {
    // Series: sin(n)/n = 1 - n^2/6, (n cos n - sin n)/n^3 = -1/3 + n^2/30.
    const double sinc = 1.0 - n * n / 6.0;
    const double c = -1.0 / 3.0 + n * n / 30.0;
    D.row(0) = -sinc * u.transpose();
    D.block<3, 3>(1, 0) = sinc * Matrix3d::Identity() + c * u * u.transpose();
    return D;
  }
  const double sinc = std::sin(n) / n;
  D.row(0) = -sinc * u.transpose();
  D.block<3, 3>(1, 0) = sinc * Matrix3d::Identity() +
                        ((n * std::cos(n) - std::sin(n)) / (n * n * n)) * u * u.transpose();
  return D;
}

Mat34 dlog_q(const Quat& q_in) {
  // Exact ambient-space derivative of (atan2(||qv||, q0) / ||qv||) qv,
  // including the sign canonicalization: log_q(q) = log_q(-q) for q0 < 0.
  if (q_in.w < 0.0) {
    return -dlog_q(q_in.canonical());
  }
  const Quat& q = q_in;
  const double q0 = q.w;
  const double s = q.vec.norm();
  const double r2 = q0 * q0 + s * s;
  Mat34 D;
  if (s < 1e-6) {
    D.col(0) = -q.vec / r2;
    D.block<3, 3>(0, 1) =
        (1.0 / q0 - s * s / (3.0 * q0 * q0 * q0)) * Matrix3d::Identity() -
        (2.0 / (3.0 * q0 * q0 * q0)) * q.vec * q.vec.transpose();
    return D;
  }
  const double theta = std::atan2(s, q0);
  D.col(0) = -q.vec / r2;
  D.block<3, 3>(0, 1) =
      (theta / s) * Matrix3d::Identity() +
      (q0 / (r2 * s * s) - theta / (s * s * s)) * q.vec * q.vec.transpose();
  return D;
}

Matrix4d dconj() {
  Matrix4d C = Matrix4d::Identity();
  C(1, 1) = C(2, 2) = C(3, 3) = -1.0;
  return C;
}

Mat34 dRv_dq(const Quat& q, const Vector3d& v) {
  // R(q) v = 2 qv (qv . v) + q0^2 v + 2 q0 (qv x v) - v ||qv||^2.
  Mat34 D;
  D.col(0) = 2.0 * q.w * v + 2.0 * q.vec.cross(v);
  D.block<3, 3>(0, 1) = 2.0 * (q.vec.dot(v) * Matrix3d::Identity() +
                               q.vec * v.transpose() - q.w * cross_matrix(v) -
                               v * q.vec.transpose());
  return D;
}

Mat34 dRtv_dq(const Quat& q, const Vector3d& v) {
  // R(q)^T v = 2 qv (qv . v) + q0^2 v - 2 q0 (qv x v) - v ||qv||^2.
  Mat34 D;
  D.col(0) = 2.0 * q.w * v - 2.0 * q.vec.cross(v);
  D.block<3, 3>(0, 1) = 2.0 * (q.vec.dot(v) * Matrix3d::Identity() +
                               q.vec * v.transpose() + q.w * cross_matrix(v) -
                               v * q.vec.transpose());
  return D;
}

Matrix3d so3_right_jacobian(const Vector3d& eta) {
  const double n = eta.norm();
  const Matrix3d K = cross_matrix(eta);
  if (n < 1e-6) {
    return Matrix3d::Identity() - 0.5 * K + (1.0 / 6.0) * K * K;
  }
  return Matrix3d::Identity() - ((1.0 - std::cos(n)) / (n * n)) * K +
         ((n - std::sin(n)) / (n * n * n)) * K * K;
}

}  // namespace fusion
