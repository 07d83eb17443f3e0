// Shared value types: noise levels, environment constants, measurement and
// estimate containers.
#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fusion/orientation.hpp"

namespace fusion {

// Standard deviations of the sensor noises and the priors. All axes share a
// level; every entry must be strictly positive.
struct NoiseModel {
  double sigma_gyr = 1e-2;    // rad/s
  double sigma_acc = 1e-1;    // m/s^2
  double sigma_mag = 1e-1;    // unit-field
  double sigma_pos = 1e-2;    // m
  double sigma_ori_prior = 20.0 * M_PI / 180.0;  // rad
  double sigma_vel_prior = 0.1;                  // m/s
  double sigma_bias_prior = 5e-2;                // rad/s
  double sigma_bias_walk = 1e-10;                // rad/s per step

  void validate() const;
};

// Navigation-frame constants. Gravity points down in a z-up frame, the unit
// magnetic field dips below the horizontal plane by the dip angle.
struct Environment {
  Vector3d gravity_n = Vector3d(0.0, 0.0, -9.82);
  Vector3d mag_field_n = default_mag_field(71.0 * M_PI / 180.0);
  double sample_period = 1.0;  // s

  static Vector3d default_mag_field(double dip_rad) {
    return Vector3d(std::cos(dip_rad), 0.0, -std::sin(dip_rad));
  }
};

// Time-indexed sensor samples with uniform period. mag/pos may be absent.
struct MeasurementSeries {
  double sample_period = 1.0;
  std::vector<Vector3d> gyr;
  std::vector<Vector3d> acc;
  std::vector<Vector3d> mag;
  std::vector<Vector3d> pos;

  std::size_t size() const { return gyr.size(); }
  bool has_mag() const { return !mag.empty(); }
  bool has_pos() const { return !pos.empty(); }
};

// Per-sample true state produced by the simulator. Kinematically consistent:
// q_{t+1} = q_t (x) exp_q(T/2 w_t), p/v follow the Euler discretization.
struct GroundTruth {
  double sample_period = 1.0;
  std::vector<Quat> q;          // q^nb
  std::vector<Vector3d> omega;  // rad/s, body frame
  std::vector<Vector3d> p;      // m
  std::vector<Vector3d> v;      // m/s
  std::vector<Vector3d> a;      // m/s^2, navigation frame

  std::size_t size() const { return q.size(); }
};

// Estimator output: per-sample orientation, optional pose/bias states, and
// covariance of the orientation deviation (plus blocks for the extensions).
struct EstimateTrace {
  double sample_period = 1.0;
  std::vector<Quat> q;
  std::vector<Vector3d> p;
  std::vector<Vector3d> v;
  std::vector<Vector3d> bias;           // per-step bias estimates (filters)
  std::vector<Matrix3d> cov_ori;        // cov(eta_t^n)
  std::vector<Matrix3d> cov_bias;
  std::vector<Matrix3d> cov_pos;
  bool converged = true;
  int iterations = 0;

  std::size_t size() const { return q.size(); }
  bool has_pose() const { return !p.empty(); }
  bool has_bias() const { return !bias.empty(); }
};

struct BiasEstimate {
  Vector3d delta = Vector3d::Zero();  // rad/s
  Matrix3d cov = Matrix3d::Zero();
  std::string method;
  int iterations = 0;
};

}  // namespace fusion
