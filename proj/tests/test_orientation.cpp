#include <doctest.h>

#include "fusion/orientation.hpp"
#include "test_helpers.hpp"

using namespace fusion;

namespace {

// Rotation matrix from axis and angle built straight from the defining
// formula; independent oracle for the quaternion path.
Matrix3d axis_angle_matrix(const Vector3d& n, double alpha) {
  const Matrix3d K = cross_matrix(n);
  return Matrix3d::Identity() - std::sin(alpha) * K + (1.0 - std::cos(alpha)) * K * K;
}

}  // namespace

TEST_SUITE_BEGIN("orientation");

TEST_CASE("quaternion multiplication basics") {
  const Quat q = test::random_unit_quat();
  CHECK(((Quat::identity() * q).to_vec4() - q.to_vec4()).norm() == doctest::Approx(0.0));
  CHECK(((q * q.conj()).to_vec4() - Quat::identity().to_vec4()).norm() < 1e-15);

  // Unit vector quaternions multiply like the cross product of their axes.
  const Quat e1(0, 1, 0, 0), e2(0, 0, 1, 0);
  const Quat p = e1 * e2;
  CHECK(p.w == doctest::Approx(0.0));
  CHECK((p.vec - Vector3d(0, 0, 1)).norm() < 1e-15);
}

TEST_CASE("norm multiplicativity and left/right matrices") {
  for (int i = 0; i < 1000; ++i) {
    const Quat p(test::uniform(-2, 2), test::random_vec3(2.0));
    const Quat q(test::uniform(-2, 2), test::random_vec3(2.0));
    const Quat pq = p * q;
    CHECK(pq.norm() == doctest::Approx(p.norm() * q.norm()).epsilon(1e-12));
    CHECK((pq.to_vec4() - left_mult_matrix(p) * q.to_vec4()).lpNorm<Eigen::Infinity>() <
          1e-14);
    CHECK((pq.to_vec4() - right_mult_matrix(q) * p.to_vec4()).lpNorm<Eigen::Infinity>() <
          1e-14);
  }
}

TEST_CASE("conjugate") {
  CHECK((Quat(1, 0, 0, 0).conj().to_vec4() - Vector4d(1, 0, 0, 0)).norm() == 0.0);
  const Quat q(0.7071, 0, 0, -0.7071);
  CHECK((q.conj().to_vec4() - Vector4d(0.7071, 0, 0, 0.7071)).norm() == 0.0);
  const Quat r = test::random_unit_quat();
  CHECK((r.conj().conj().to_vec4() - r.to_vec4()).norm() == 0.0);
}

TEST_CASE("cross matrix") {
  CHECK(cross_matrix(Vector3d::Zero()).norm() == 0.0);
  Matrix3d e3x;
  e3x << 0, -1, 0, 1, 0, 0, 0, 0, 0;
  CHECK((cross_matrix(Vector3d(0, 0, 1)) - e3x).norm() == 0.0);
  for (int i = 0; i < 100; ++i) {
    const Vector3d u = test::random_vec3(3.0), v = test::random_vec3(3.0);
    CHECK((cross_matrix(u) * u).norm() < 1e-15);
    CHECK((cross_matrix(u) * v - u.cross(v)).norm() < 1e-15);
  }
}

TEST_CASE("rotate vector") {
  const Vector3d v(1, 2, 3);
  CHECK((rotate(Quat::identity(), v) - v).norm() == 0.0);

  // Quarter turn about z, checked against the axis-angle matrix evaluated
  // numerically.
  const Quat q = axis_angle_to_quat(Vector3d(0, 0, 1), M_PI / 2);
  const Vector3d expect = axis_angle_matrix(Vector3d(0, 0, 1), M_PI / 2) * Vector3d(1, 0, 0);
  CHECK((expect - Vector3d(0, -1, 0)).norm() < 1e-15);
  CHECK((rotate(q, Vector3d(1, 0, 0)) - expect).norm() < 1e-12);

  for (int i = 0; i < 1000; ++i) {
    const Quat r = test::random_unit_quat();
    const Vector3d x = test::random_vec3(5.0);
    const Quat minus_r(-r.w, -r.vec);
    CHECK((rotate(r, x) - rotate(minus_r, x)).norm() < 1e-12);        // double cover
    CHECK(rotate(r, x).norm() == doctest::Approx(x.norm()).epsilon(1e-12));
    CHECK((rotate(r, x) - quat_to_rotmat(r) * x).norm() < 1e-12);
  }

  CHECK_THROWS_AS(rotate(Quat(1.1, 0, 0, 0), v), std::invalid_argument);
}

TEST_CASE("exp map") {
  CHECK((exp_q(Vector3d::Zero()).to_vec4() - Vector4d(1, 0, 0, 0)).norm() == 0.0);
  const Quat qx = exp_q(Vector3d(M_PI / 2, 0, 0));
  CHECK((qx.to_vec4() - Vector4d(std::cos(M_PI / 2), 1, 0, 0)).norm() < 1e-15);

  for (int i = 0; i < 10000; ++i) {
    Vector3d eta = test::random_vec3();
    eta *= test::uniform(0.0, M_PI - 1e-3) / eta.norm();
    // Half-angle convention: exp_q(eta / 2) and exp_R(eta) encode the same
    // rotation.
    CHECK((exp_R(eta) - quat_to_rotmat(exp_q(0.5 * eta))).lpNorm<Eigen::Infinity>() <
          1e-12);
  }
}

TEST_CASE("log map") {
  CHECK(log_q(Quat::identity()).norm() == 0.0);
  CHECK((log_q(Quat(0, 1, 0, 0)) - Vector3d(M_PI / 2, 0, 0)).norm() < 1e-12);

  for (int i = 0; i < 10000; ++i) {
    Vector3d u = test::random_vec3();
    u *= test::uniform(1e-12, 0.5 * (M_PI - 0.1)) / u.norm();
    CHECK((log_q(exp_q(u)) - u).lpNorm<Eigen::Infinity>() < 1e-12);
    // Rotation-vector round trip through the half-angle convention.
    const Vector3d eta = 2.0 * u;
    CHECK((2.0 * log_q(exp_q(0.5 * eta)) - eta).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK((log_R(exp_R(eta)) - eta).lpNorm<Eigen::Infinity>() < 1e-11);
  }
  CHECK_THROWS_AS(log_q(Quat(0.5, 0.5, 0, 0)), std::invalid_argument);
}

TEST_CASE("quaternion to rotation matrix and back") {
  CHECK((quat_to_rotmat(Quat::identity()) - Matrix3d::Identity()).norm() == 0.0);

  const Quat q(0.70710678118654752, 0, 0, -0.70710678118654752);
  Matrix3d expect;
  expect << 0, 1, 0, -1, 0, 0, 0, 0, 1;
  CHECK((quat_to_rotmat(q) - expect).lpNorm<Eigen::Infinity>() < 1e-12);

  for (int i = 0; i < 10000; ++i) {
    // Mix generic draws with near-pi rotations to hit both conversion
    // branches.
    Quat r = test::random_unit_quat();
    if (i % 3 == 0) {
      Vector3d axis = test::random_vec3().normalized();
      r = axis_angle_to_quat(axis, M_PI - test::uniform(0.0, 1e-3));
    }
    const Quat back = rotmat_to_quat(quat_to_rotmat(r));
    const double diff = std::min((back.to_vec4() - r.to_vec4()).lpNorm<Eigen::Infinity>(),
                                 (back.to_vec4() + r.to_vec4()).lpNorm<Eigen::Infinity>());
    CHECK(diff < 1e-10);
  }
  Matrix3d bad = Matrix3d::Identity();
  bad(0, 0) = 1.01;
  CHECK_THROWS_AS(rotmat_to_quat(bad), std::invalid_argument);
}

TEST_CASE("rotation matrix invariants") {
  for (int i = 0; i < 1000; ++i) {
    const Matrix3d R = quat_to_rotmat(test::random_unit_quat());
    CHECK((R * R.transpose() - Matrix3d::Identity()).lpNorm<Eigen::Infinity>() < 1e-9);
    CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("euler angles") {
  const EulerAngles zero = rotmat_to_euler(Matrix3d::Identity());
  CHECK(zero.yaw == 0.0);
  CHECK(zero.pitch == 0.0);
  CHECK(zero.roll == 0.0);

  // First factor of the (z, y, x) product evaluated directly.
  const Matrix3d Ryaw = euler_to_rotmat({M_PI / 2, 0.0, 0.0});
  CHECK((Ryaw * Vector3d(1, 0, 0) - Vector3d(0, -1, 0)).norm() < 1e-15);

  for (int i = 0; i < 10000; ++i) {
    EulerAngles e;
    e.yaw = test::uniform(-M_PI + 1e-6, M_PI);
    e.pitch = test::uniform(-M_PI / 2 + 0.05, M_PI / 2 - 0.05);
    e.roll = test::uniform(-M_PI + 1e-6, M_PI);
    const EulerAngles back = rotmat_to_euler(euler_to_rotmat(e));
    CHECK(std::abs(back.yaw - e.yaw) < 1e-10);
    CHECK(std::abs(back.pitch - e.pitch) < 1e-10);
    CHECK(std::abs(back.roll - e.roll) < 1e-10);
  }

  // Gimbal lock: the returned angles must reproduce the same rotation with
  // roll forced to zero.
  for (double pitch : {M_PI / 2, -M_PI / 2}) {
    const Matrix3d R = euler_to_rotmat({0.4, pitch, -0.3});
    const EulerAngles e = rotmat_to_euler(R);
    CHECK(e.roll == 0.0);
    CHECK((euler_to_rotmat(e) - R).lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("axis-angle convention matches the rotation formula") {
  for (int i = 0; i < 200; ++i) {
    const Vector3d n = test::random_vec3().normalized();
    const double alpha = test::uniform(-3.0, 3.0);
    CHECK((quat_to_rotmat(axis_angle_to_quat(n, alpha)) - axis_angle_matrix(n, alpha))
              .lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("small-angle expansion error decays at least quadratically") {
  Vector3d eta = Vector3d(0.3, -0.2, 0.4);
  double prev = -1.0;
  for (int k = 0; k < 6; ++k) {
    const Vector4d approx = Quat(1.0, eta).normalized().to_vec4();
    const double err = (exp_q(eta).to_vec4() - approx).norm();
    if (prev > 0.0) CHECK(prev / err > 3.9);
    prev = err;
    eta *= 0.5;
  }
}

TEST_CASE("exp/log derivative blocks match finite differences") {
  for (int i = 0; i < 100; ++i) {
    const Vector3d u = test::random_vec3(0.8);
    const auto fexp = [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      return exp_q(Vector3d(x)).to_vec4();
    };
    CHECK(test::jacobian_rel_error(dexp_q(u),
                                   test::numeric_jacobian(fexp, u)) < 1e-6);

    // dlog_q is the ambient-space derivative; compare against the same
    // formula evaluated off the unit sphere.
    const Quat q = test::random_unit_quat().canonical();
    const auto fraw = [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      const Quat qq = Quat::from_vec4(Vector4d(x));
      const Quat c = qq.w < 0 ? Quat(-qq.w, -qq.vec) : qq;
      const double s = c.vec.norm();
      if (s < 1e-12) return Vector3d::Zero();
      return Vector3d((std::atan2(s, c.w) / s) * c.vec);
    };
    CHECK(test::jacobian_rel_error(dlog_q(q),
                                   test::numeric_jacobian(fraw, q.to_vec4())) < 1e-6);
  }
}

TEST_CASE("rotation derivative blocks match finite differences") {
  for (int i = 0; i < 100; ++i) {
    const Quat q = test::random_unit_quat();
    const Vector3d v = test::random_vec3(5.0);
    const auto fRv = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      const Quat qq = Quat::from_vec4(Vector4d(x));
      // Quadratic form valid for non-unit arguments as well.
      return Vector3d(2.0 * qq.vec * qq.vec.dot(v) + qq.w * qq.w * v +
                      2.0 * qq.w * qq.vec.cross(v) - v * qq.vec.squaredNorm());
    };
    const auto fRtv = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      const Quat qq = Quat::from_vec4(Vector4d(x));
      return Vector3d(2.0 * qq.vec * qq.vec.dot(v) + qq.w * qq.w * v -
                      2.0 * qq.w * qq.vec.cross(v) - v * qq.vec.squaredNorm());
    };
    CHECK(test::jacobian_rel_error(dRv_dq(q, v),
                                   test::numeric_jacobian(fRv, q.to_vec4())) < 1e-6);
    CHECK(test::jacobian_rel_error(dRtv_dq(q, v),
                                   test::numeric_jacobian(fRtv, q.to_vec4())) < 1e-6);
  }
}

TEST_SUITE_END();
