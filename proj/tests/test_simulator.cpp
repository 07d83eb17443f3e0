#include <doctest.h>

#include "fusion/metrics.hpp"
#include "fusion/sensor_models.hpp"
#include "fusion/simulator.hpp"
#include "test_helpers.hpp"

using namespace fusion;

TEST_SUITE_BEGIN("simulator");

TEST_CASE("stationary pose scenario holds still") {
  ScenarioConfig cfg;
  cfg.kind = ScenarioKind::kPoseStationary;
  cfg.samples = 400;
  const GroundTruth truth = simulate_truth(cfg);
  for (int t = 0; t < cfg.samples; ++t) {
    CHECK((truth.p[t] - truth.p[0]).norm() == 0.0);
    CHECK((truth.q[t].to_vec4() - truth.q[0].to_vec4()).norm() == 0.0);
  }
}

TEST_CASE("constant acceleration integrates to the closed form") {
  ScenarioConfig cfg;
  cfg.kind = ScenarioKind::kPoseConstAcc;
  cfg.samples = 400;
  cfg.sample_period = 1.0;
  const GroundTruth truth = simulate_truth(cfg);
  const double vN = (cfg.samples - 1) * cfg.sample_period * 1.0;
  CHECK((truth.v.back() - vN * Vector3d(1, 0, 0)).norm() < 1e-9);
}

TEST_CASE("orientation scenario is kinematically consistent") {
  ScenarioConfig cfg;
  cfg.samples = 400;
  cfg.sample_period = 1.0;
  const GroundTruth truth = simulate_truth(cfg);
  for (int t = 0; t + 1 < cfg.samples; ++t) {
    const Vector3d w =
        (2.0 / cfg.sample_period) * log_q(truth.q[t].conj() * truth.q[t + 1]);
    CHECK((w - truth.omega[t]).lpNorm<Eigen::Infinity>() < 1e-12);
  }
  // Stationary lead-in, then rotation.
  for (int t = 0; t < 100; ++t) CHECK(truth.omega[t].norm() == 0.0);
  double total = 0.0;
  for (int t = 100; t < 200; ++t) total += cfg.sample_period * truth.omega[t](0);
  CHECK(total == doctest::Approx(M_PI / 2).epsilon(1e-9));
}

TEST_CASE("noise-free measurements invert the models") {
  ScenarioConfig cfg;
  cfg.kind = ScenarioKind::kPoseStationary;
  cfg.samples = 50;
  cfg.noise.sigma_gyr = cfg.noise.sigma_acc = cfg.noise.sigma_mag =
      cfg.noise.sigma_pos = 1e-15;
  const GroundTruth truth = simulate_truth(cfg);
  const MeasurementSeries meas = generate_measurements(truth, cfg);
  for (int t = 0; t < cfg.samples; ++t) {
    CHECK((meas.acc[t] - Vector3d(0, 0, 9.82)).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK((meas.mag[t] - cfg.env.mag_field_n).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK(meas.gyr[t].lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK((meas.pos[t] - truth.p[t]).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("magnetic disturbance only affects its window") {
  ScenarioConfig cfg;
  cfg.kind = ScenarioKind::kOrientationMagDisturbed;
  cfg.samples = 400;
  cfg.noise.sigma_gyr = cfg.noise.sigma_acc = cfg.noise.sigma_mag = 1e-15;
  MagDisturbance d;
  d.offset = Vector3d(0.1, 0.3, 0.5);
  d.first = 150;
  d.last = 250;
  cfg.mag_disturbance = d;
  const GroundTruth truth = simulate_truth(cfg);
  const MeasurementSeries meas = generate_measurements(truth, cfg);
  for (int t = 0; t < cfg.samples; ++t) {
    const int sample = t + 1;
    const Vector3d base = cfg.env.mag_field_n;
    const Vector3d expect =
        (sample >= 150 && sample <= 250) ? Vector3d(base + d.offset) : base;
    CHECK((meas.mag[t] - expect).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK((meas.acc[t] - Vector3d(0, 0, 9.82)).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("noise statistics match the configured levels") {
  ScenarioConfig cfg;
  cfg.kind = ScenarioKind::kPoseStationary;
  cfg.samples = 100000;
  cfg.seed = 99;
  const GroundTruth truth = simulate_truth(cfg);
  const MeasurementSeries meas = generate_measurements(truth, cfg);
  Vector3d mean = Vector3d::Zero();
  for (const auto& g : meas.gyr) mean += g;
  mean /= static_cast<double>(meas.size());
  Vector3d var = Vector3d::Zero();
  for (const auto& g : meas.gyr) var += (g - mean).cwiseProduct(g - mean);
  var /= static_cast<double>(meas.size() - 1);
  for (int k = 0; k < 3; ++k) {
    CHECK(var(k) ==
          doctest::Approx(cfg.noise.sigma_gyr * cfg.noise.sigma_gyr).epsilon(0.03));
  }
}

TEST_CASE("identical seeds reproduce bit-identical outputs") {
  ScenarioConfig cfg;
  cfg.kind = ScenarioKind::kPoseRandAcc;
  cfg.samples = 200;
  cfg.seed = 1234;
  const GroundTruth t1 = simulate_truth(cfg);
  const GroundTruth t2 = simulate_truth(cfg);
  const MeasurementSeries m1 = generate_measurements(t1, cfg);
  const MeasurementSeries m2 = generate_measurements(t2, cfg);
  for (std::size_t i = 0; i < m1.size(); ++i) {
    CHECK(m1.gyr[i] == m2.gyr[i]);
    CHECK(m1.acc[i] == m2.acc[i]);
    CHECK(m1.mag[i] == m2.mag[i]);
    CHECK(m1.pos[i] == m2.pos[i]);
    CHECK(t1.a[i] == t2.a[i]);
  }
}

TEST_CASE("dead reckoning recovers noise-free data") {
  ScenarioConfig cfg;
  cfg.samples = 400;
  cfg.noise.sigma_gyr = cfg.noise.sigma_acc = cfg.noise.sigma_mag = 1e-15;
  const GroundTruth truth = simulate_truth(cfg);
  const MeasurementSeries meas = generate_measurements(truth, cfg);
  const EstimateTrace trace = dead_reckon(meas, cfg.env, truth.q.front());
  for (int t = 0; t < cfg.samples; ++t) {
    CHECK(2.0 * log_q(trace.q[t] * truth.q[t].conj()).norm() < 1e-9);
  }
}

TEST_CASE("constant gyro bias drifts the heading linearly") {
  ScenarioConfig cfg;
  cfg.kind = ScenarioKind::kPoseStationary;  // zero true rotation
  cfg.samples = 200;
  cfg.sample_period = 1.0;
  cfg.noise.sigma_gyr = cfg.noise.sigma_acc = cfg.noise.sigma_mag =
      cfg.noise.sigma_pos = 1e-15;
  const Vector3d bias(0, 0, 2e-3);
  cfg.gyro_bias = bias;
  const GroundTruth truth = simulate_truth(cfg);
  const MeasurementSeries meas = generate_measurements(truth, cfg);
  const EstimateTrace trace = dead_reckon(meas, cfg.env, truth.q.front());
  for (int t = 0; t < cfg.samples; t += 20) {
    const double angle = 2.0 * log_q(trace.q[t] * truth.q[t].conj()).norm();
    CHECK(angle == doctest::Approx(bias.norm() * cfg.sample_period * t).epsilon(1e-6));
  }
}

TEST_CASE("white gyro noise integrates to a random walk") {
  // Monte Carlo standard deviation of the integrated angle at step n is
  // close to sigma * T * sqrt(n).
  const int runs = 300;
  const int n = 400;
  ScenarioConfig cfg;
  cfg.kind = ScenarioKind::kPoseStationary;
  cfg.samples = n;
  cfg.sample_period = 1.0;
  cfg.noise.sigma_acc = cfg.noise.sigma_mag = cfg.noise.sigma_pos = 1e-15;
  cfg.noise.sigma_gyr = 1e-2;
  double sq = 0.0;
  for (int r = 0; r < runs; ++r) {
    cfg.seed = 4000 + r;
    const GroundTruth truth = simulate_truth(cfg);
    const MeasurementSeries meas = generate_measurements(truth, cfg);
    const EstimateTrace trace = dead_reckon(meas, cfg.env, truth.q.front());
    const Vector3d err = 2.0 * log_q(trace.q.back() * truth.q.back().conj());
    sq += err.squaredNorm();
  }
  const double std_per_axis = std::sqrt(sq / (3.0 * runs));
  const double expect = cfg.noise.sigma_gyr * cfg.sample_period * std::sqrt(n - 1.0);
  CHECK(std_per_axis == doctest::Approx(expect).epsilon(0.12));
}

TEST_CASE("residuals of generated noise match the configured covariance") {
  ScenarioConfig cfg;
  cfg.kind = ScenarioKind::kOrientationMagDisturbed;  // stationary, no window set
  cfg.samples = 10000;
  cfg.seed = 31;
  const GroundTruth truth = simulate_truth(cfg);
  const MeasurementSeries meas = generate_measurements(truth, cfg);
  Vector3d acc_var = Vector3d::Zero();
  for (std::size_t t = 0; t < meas.size(); ++t) {
    const Vector3d e =
        residual_acc(Vector3d::Zero(), truth.q[t], meas.acc[t], cfg.env).e;
    acc_var += e.cwiseProduct(e);
  }
  acc_var /= static_cast<double>(meas.size());
  for (int k = 0; k < 3; ++k) {
    CHECK(acc_var(k) ==
          doctest::Approx(cfg.noise.sigma_acc * cfg.noise.sigma_acc).epsilon(0.05));
  }
}

TEST_CASE("config validation") {
  ScenarioConfig cfg;
  cfg.samples = 1;
  CHECK_THROWS_AS(simulate_truth(cfg), std::invalid_argument);
  cfg.samples = 100;
  cfg.mag_disturbance = MagDisturbance{Vector3d::Zero(), 50, 200};
  CHECK_THROWS_AS(simulate_truth(cfg), std::invalid_argument);
}

TEST_SUITE_END();
