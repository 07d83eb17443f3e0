#include <doctest.h>

#include "fusion/sensor_models.hpp"
#include "fusion/simulator.hpp"
#include "test_helpers.hpp"

using namespace fusion;

namespace {

const Environment kEnv;  // defaults: g = (0,0,-9.82), 71 degree dip

double quest_objective(const Quat& q, const Vector3d& acc, const Vector3d& mag) {
  const Vector3d g_n(0, 0, 1), m_n(1, 0, 0);
  const Vector3d g_b = acc.normalized();
  const Vector3d m_b = g_b.cross(mag.normalized().cross(g_b));
  return (g_n - rotate(q, g_b)).squaredNorm() + (m_n - rotate(q, m_b)).squaredNorm();
}

}  // namespace

TEST_SUITE_BEGIN("sensor_models");

TEST_CASE("initial orientation from aligned samples") {
  const Vector3d acc(0, 0, 9.82);
  const Quat q = quest_initial_orientation(acc, kEnv.mag_field_n, kEnv);
  // Body aligned with navigation: identity up to sign.
  CHECK(std::abs(std::abs(q.w) - 1.0) < 1e-9);
}

TEST_CASE("initial orientation, 180 degree yaw") {
  const Vector3d acc(0, 0, 9.82);
  const Vector3d mag(-kEnv.mag_field_n(0), 0, kEnv.mag_field_n(2));
  const Quat q = quest_initial_orientation(acc, mag, kEnv);

  // Brute-force oracle: the returned quaternion must beat a dense random
  // sampling of the alignment objective.
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 20000; ++i) {
    best = std::min(best, quest_objective(test::random_unit_quat(), acc, mag));
  }
  CHECK(quest_objective(q, acc, mag) <= best + 1e-9);
  // And coincide with the 180-degree yaw rotation.
  const Quat expect(0, 0, 0, 1);
  const double diff =
      std::min((q.to_vec4() - expect.to_vec4()).norm(), (q.to_vec4() + expect.to_vec4()).norm());
  CHECK(diff < 1e-9);
}

TEST_CASE("initial orientation recovers random noise-free poses") {
  for (int i = 0; i < 200; ++i) {
    const Quat truth = test::random_unit_quat();
    const Matrix3d Rbn = quat_to_rotmat(truth).transpose();
    const Vector3d acc = -Rbn * kEnv.gravity_n;
    const Vector3d mag = Rbn * kEnv.mag_field_n;
    const Quat q = quest_initial_orientation(acc, mag, kEnv);
    const Vector3d g_b = acc.normalized();
    const Vector3d m_b = g_b.cross(mag.normalized().cross(g_b));
    CHECK((rotate(q, g_b) - Vector3d(0, 0, 1)).norm() < 1e-6);
    CHECK((rotate(q, m_b).normalized() - Vector3d(1, 0, 0)).norm() < 1e-6);

    // Invariance to positive scaling of the raw samples.
    const Quat q2 = quest_initial_orientation(3.7 * acc, 0.2 * mag, kEnv);
    CHECK((quat_to_rotmat(q) - quat_to_rotmat(q2)).lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("initial orientation degenerate inputs") {
  CHECK_THROWS_AS(
      quest_initial_orientation(Vector3d(0, 0, 9.82), Vector3d(0, 0, 1), kEnv),
      std::domain_error);
  CHECK_THROWS_AS(
      quest_initial_orientation(Vector3d(0, 0, 0.5), Vector3d(1, 0, 0), kEnv),
      std::domain_error);
}

TEST_CASE("prior covariances") {
  NoiseModel noise;
  const OrientationPrior p = prior_covariances(Quat::identity(), noise);
  const double sigma = 20.0 * M_PI / 180.0;
  CHECK((p.cov_eta - sigma * sigma * Matrix3d::Identity()).norm() < 1e-12);
  CHECK(std::sqrt(p.cov_eta(0, 0)) == doctest::Approx(0.349).epsilon(1e-3));
  // Identity linearization: no uncertainty along the scalar component.
  CHECK(p.cov_quat.row(0).norm() < 1e-12);
  CHECK(p.cov_quat.col(0).norm() < 1e-12);

  for (int i = 0; i < 50; ++i) {
    const Quat q = test::random_unit_quat();
    const OrientationPrior pr = prior_covariances(q, noise);
    CHECK(pr.cov_quat.trace() ==
          doctest::Approx(0.25 * pr.cov_eta.trace()).epsilon(1e-12));
  }
}

TEST_CASE("prior residual") {
  const Quat q = test::random_unit_quat();
  const auto r = residual_prior_orientation(Vector3d::Zero(), q, q);
  CHECK(r.e.norm() < 1e-14);

  // Small deviations pass through to first order.
  for (int i = 0; i < 50; ++i) {
    const Vector3d d = test::random_vec3(1e-3);
    const Quat lin = (exp_q(0.5 * d) * q).normalized();
    const auto rr = residual_prior_orientation(Vector3d::Zero(), lin, q);
    CHECK((rr.e - d).norm() < 2.0 * d.squaredNorm());
  }
}

TEST_CASE("prior residual Jacobian vs central differences") {
  for (int i = 0; i < 100; ++i) {
    const Quat q_lin = test::random_unit_quat();
    const Quat q_init =
        (exp_q(0.5 * test::random_vec3(0.4)) * q_lin).normalized();
    const Vector3d eta0 = test::random_vec3(0.3);
    const auto analytic = residual_prior_orientation(eta0, q_lin, q_init).J_eta;
    const auto f = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      return residual_prior_orientation(Vector3d(x), q_lin, q_init).e;
    };
    CHECK(test::jacobian_rel_error(analytic, test::numeric_jacobian(f, eta0)) < 1e-5);
  }
}

TEST_CASE("gyro dynamics residual zero cases") {
  const double T = 0.25;
  const Vector3d w(0.4, -0.2, 0.7);
  const Quat q_t = test::random_unit_quat();
  const Quat q_t1 = (q_t * exp_q(0.5 * T * w)).normalized();
  const auto r = residual_gyr_dynamics(Vector3d::Zero(), Vector3d::Zero(), q_t, q_t1, w, T);
  CHECK(r.e.norm() < 1e-12);
  CHECK((r.J_bias - Matrix3d::Identity()).norm() == 0.0);

  // Constant rate propagated exactly: zero residual along the whole path.
  Quat q = test::random_unit_quat();
  const Vector3d w2(0.1, 0, 0);
  for (int t = 0; t < 50; ++t) {
    const Quat next = (q * exp_q(0.5 * T * w2)).normalized();
    CHECK(residual_gyr_dynamics(Vector3d::Zero(), Vector3d::Zero(), q, next, w2, T)
              .e.norm() < 1e-11);
    q = next;
  }

  // With a bias state, the measured rate is corrected before comparing.
  const Vector3d bias(0.05, 0.01, -0.04);
  const auto rb = residual_gyr_dynamics(Vector3d::Zero(), Vector3d::Zero(), q_t, q_t1,
                                        w + bias, T, bias);
  CHECK(rb.e.norm() < 1e-12);
}

TEST_CASE("gyro dynamics Jacobians vs central differences") {
  for (int i = 0; i < 100; ++i) {
    const double T = test::uniform(0.05, 1.5);
    const Quat q_t = test::random_unit_quat();
    const Quat q_t1 = (q_t * exp_q(0.5 * T * test::random_vec3(0.5))).normalized();
    const Vector3d w = test::random_vec3(0.8);
    const Vector3d bias = test::random_vec3(0.05);
    const Vector3d eta_t = test::random_vec3(0.2);
    const Vector3d eta_t1 = test::random_vec3(0.2);
    const auto r = residual_gyr_dynamics(eta_t, eta_t1, q_t, q_t1, w, T, bias);

    const auto f_t = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      return residual_gyr_dynamics(Vector3d(x), eta_t1, q_t, q_t1, w, T, bias).e;
    };
    const auto f_t1 = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      return residual_gyr_dynamics(eta_t, Vector3d(x), q_t, q_t1, w, T, bias).e;
    };
    const auto f_b = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      return residual_gyr_dynamics(eta_t, eta_t1, q_t, q_t1, w, T, Vector3d(x)).e;
    };
    CHECK(test::jacobian_rel_error(r.J_eta_t, test::numeric_jacobian(f_t, eta_t)) < 1e-5);
    CHECK(test::jacobian_rel_error(r.J_eta_t1, test::numeric_jacobian(f_t1, eta_t1)) <
          1e-5);
    CHECK(test::jacobian_rel_error(r.J_bias, test::numeric_jacobian(f_b, bias)) < 1e-5);
  }
}

TEST_CASE("accelerometer and magnetometer residuals") {
  // Stationary, identity pose: both residuals vanish.
  const Vector3d y_acc(0, 0, 9.82);
  CHECK(residual_acc(Vector3d::Zero(), Quat::identity(), y_acc, kEnv).e.norm() < 1e-12);
  CHECK(residual_mag(Vector3d::Zero(), Quat::identity(), kEnv.mag_field_n, kEnv)
            .e.norm() < 1e-12);

  // Jacobians at the linearization point and away from it.
  for (int i = 0; i < 100; ++i) {
    const Quat q = test::random_unit_quat();
    const Vector3d eta = (i % 2 == 0) ? Vector3d::Zero() : test::random_vec3(0.3);
    const Vector3d ya = test::random_vec3(9.0);
    const Vector3d ym = test::random_vec3(1.0);
    const auto ra = residual_acc(eta, q, ya, kEnv);
    const auto rm = residual_mag(eta, q, ym, kEnv);
    const auto fa = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      return residual_acc(Vector3d(x), q, ya, kEnv).e;
    };
    const auto fm = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      return residual_mag(Vector3d(x), q, ym, kEnv).e;
    };
    CHECK(test::jacobian_rel_error(ra.J_eta, test::numeric_jacobian(fa, eta)) < 1e-5);
    CHECK(test::jacobian_rel_error(rm.J_eta, test::numeric_jacobian(fm, eta)) < 1e-5);

    if (eta.norm() == 0.0) {
      // Closed forms at eta = 0.
      const Matrix3d Rbn = quat_to_rotmat(q).transpose();
      CHECK((ra.J_eta - Rbn * cross_matrix(kEnv.gravity_n)).norm() < 1e-12);
      CHECK((rm.J_eta + Rbn * cross_matrix(kEnv.mag_field_n)).norm() < 1e-12);
    }
  }
}

TEST_CASE("pose dynamics residuals") {
  const double T = 0.5;
  // Exact Euler propagation with consistent accelerometer data.
  for (int i = 0; i < 50; ++i) {
    const Quat q = test::random_unit_quat();
    const Vector3d a_n = test::random_vec3(2.0);
    const Vector3d y_acc = quat_to_rotmat(q).transpose() * (a_n - kEnv.gravity_n);
    const Vector3d p = test::random_vec3(10.0), v = test::random_vec3(2.0);
    const Vector3d p1 = p + T * v + 0.5 * T * T * a_n;
    const Vector3d v1 = v + T * a_n;
    const auto r = residual_pose_dynamics(p, p1, v, v1, Vector3d::Zero(), q, y_acc, T, kEnv);
    CHECK(r.e_p.norm() < 1e-10);
    CHECK(r.e_v.norm() < 1e-10);
  }

  // Stationary special case.
  {
    const Quat q = test::random_unit_quat();
    const Vector3d y_acc = -quat_to_rotmat(q).transpose() * kEnv.gravity_n;
    const Vector3d p = test::random_vec3(5.0);
    const auto r = residual_pose_dynamics(p, p, Vector3d::Zero(), Vector3d::Zero(),
                                          Vector3d::Zero(), q, y_acc, T, kEnv);
    CHECK(r.e_p.norm() < 1e-12);
    CHECK(r.e_v.norm() < 1e-12);
  }

  // All six Jacobian blocks vs central differences.
  for (int i = 0; i < 100; ++i) {
    const double Ti = test::uniform(0.05, 1.5);
    const Quat q = test::random_unit_quat();
    const Vector3d p = test::random_vec3(4.0), p1 = test::random_vec3(4.0);
    const Vector3d v = test::random_vec3(2.0), v1 = test::random_vec3(2.0);
    const Vector3d eta = (i % 2 == 0) ? Vector3d::Zero() : test::random_vec3(0.3);
    const Vector3d ya = test::random_vec3(9.0);
    const auto r = residual_pose_dynamics(p, p1, v, v1, eta, q, ya, Ti, kEnv);

    const auto check_block = [&](const Matrix3d& analytic, int which, bool pos_row) {
      const auto f = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        Vector3d pp = p, pp1 = p1, vv = v, vv1 = v1, ee = eta;
        switch (which) {
          case 0: pp = Vector3d(x); break;
          case 1: pp1 = Vector3d(x); break;
          case 2: vv = Vector3d(x); break;
          case 3: vv1 = Vector3d(x); break;
          case 4: ee = Vector3d(x); break;
        }
        const auto rr = residual_pose_dynamics(pp, pp1, vv, vv1, ee, q, ya, Ti, kEnv);
        return pos_row ? rr.e_p : rr.e_v;
      };
      const Eigen::VectorXd x0 = which == 0 ? p : which == 1 ? p1
                                 : which == 2 ? v : which == 3 ? v1 : eta;
      CHECK(test::jacobian_rel_error(analytic, test::numeric_jacobian(f, x0)) < 1e-5);
    };
    check_block(r.Jp_p_t, 0, true);
    check_block(r.Jp_p_t1, 1, true);
    check_block(r.Jp_v_t, 2, true);
    check_block(r.Jp_eta, 4, true);
    check_block(r.Jv_v_t, 2, false);
    check_block(r.Jv_v_t1, 3, false);
    check_block(r.Jv_eta, 4, false);
  }
}

TEST_CASE("position residual") {
  const Vector3d p = test::random_vec3(3.0);
  CHECK(residual_pos(p, p).e.norm() == 0.0);
  CHECK((residual_pos(p, p + Vector3d(1, 0, 0)).e - Vector3d(1, 0, 0)).norm() == 0.0);
  CHECK((residual_pos(p, p).J_p + Matrix3d::Identity()).norm() == 0.0);
}

TEST_CASE("gyro step noise map matches finite differences") {
  for (int i = 0; i < 100; ++i) {
    const Quat q = test::random_unit_quat();
    const Vector3d u = test::random_vec3(0.5);
    const Quat q_pred = q * exp_q(u);
    const Matrix3d M = gyro_step_noise_map(q, u);
    const auto f = [&](const Eigen::VectorXd& w) -> Eigen::VectorXd {
      return Vector3d(
          2.0 * log_q(q * exp_q(u + 0.5 * Vector3d(w)) * q_pred.conj()));
    };
    CHECK(test::jacobian_rel_error(M, test::numeric_jacobian(f, Vector3d::Zero())) <
          1e-5);
    // First-order agreement with the rotation matrix of the propagated point.
    CHECK((M - quat_to_rotmat(q_pred.normalized())).norm() < 2.0 * u.norm());
  }
}

TEST_CASE("noise-free trajectories give zero residuals") {
  ScenarioConfig cfg;
  cfg.kind = ScenarioKind::kOrientationDefault;
  cfg.samples = 200;
  cfg.sample_period = 1.0;
  cfg.noise.sigma_gyr = 1e-15;
  cfg.noise.sigma_acc = 1e-15;
  cfg.noise.sigma_mag = 1e-15;
  cfg.seed = 5;
  const GroundTruth truth = simulate_truth(cfg);
  const MeasurementSeries meas = generate_measurements(truth, cfg);
  for (int t = 0; t + 1 < cfg.samples; ++t) {
    CHECK(residual_gyr_dynamics(Vector3d::Zero(), Vector3d::Zero(), truth.q[t],
                                truth.q[t + 1], meas.gyr[t], cfg.sample_period)
              .e.norm() < 1e-9);
    CHECK(residual_acc(Vector3d::Zero(), truth.q[t], meas.acc[t], cfg.env).e.norm() <
          1e-9);
    CHECK(residual_mag(Vector3d::Zero(), truth.q[t], meas.mag[t], cfg.env).e.norm() <
          1e-9);
  }
}

TEST_SUITE_END();
