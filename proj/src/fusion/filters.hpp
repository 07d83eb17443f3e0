// Recursive estimators: per-step Gauss-Newton filtering, extended Kalman
// filters with quaternion and orientation-deviation states, the
// complementary filter, and their pose extensions.
#pragma once

#include "fusion/smoother.hpp"

namespace fusion {

// Defaults for the per-step solves: tighter iteration cap than smoothing.
inline GaussNewtonSettings per_step_settings() {
  GaussNewtonSettings s;
  s.max_iterations = 10;
  return s;
}

// Per-step MAP solve around the gyro-propagated linearization point with an
// arrival cost weighted by the propagated covariance. One iteration with a
// unit step reproduces the deviation-state EKF exactly.
EstimateTrace filter_orientation_opt(const MeasurementSeries& meas,
                                     const NoiseModel& noise, const Environment& env,
                                     const GaussNewtonSettings& settings = per_step_settings(),
                                     const EstimatorOptions& options = {});

// EKF with the unit quaternion as state; renormalizes the quaternion and its
// covariance after every measurement update.
EstimateTrace ekf_quaternion(const MeasurementSeries& meas, const NoiseModel& noise,
                             const Environment& env,
                             const EstimatorOptions& options = {});

// Multiplicative EKF: orientation-deviation state around a quaternion
// linearization point that is reset after each measurement update.
EstimateTrace ekf_orientation_deviation(const MeasurementSeries& meas,
                                        const NoiseModel& noise,
                                        const Environment& env,
                                        const EstimatorOptions& options = {});

// Gyro prediction blended with one weighted Gauss-Newton step on the
// accelerometer/magnetometer alignment objective; gain alpha in (0, 1), no
// covariance is maintained.
EstimateTrace complementary_filter(const MeasurementSeries& meas,
                                   const NoiseModel& noise, const Environment& env,
                                   double alpha,
                                   const EstimatorOptions& options = {});

// Pose extensions over the (p, v, orientation) state.
EstimateTrace filter_pose_opt(const MeasurementSeries& meas, const NoiseModel& noise,
                              const Environment& env,
                              const GaussNewtonSettings& settings = per_step_settings(),
                              const EstimatorOptions& options = {});
EstimateTrace ekf_pose_quaternion(const MeasurementSeries& meas,
                                  const NoiseModel& noise, const Environment& env,
                                  const EstimatorOptions& options = {});
EstimateTrace ekf_pose_deviation(const MeasurementSeries& meas,
                                 const NoiseModel& noise, const Environment& env,
                                 const EstimatorOptions& options = {});

// Covariance of the orientation deviation implied by a quaternion
// covariance at the linearization point q (and back).
Matrix3d quat_cov_to_eta_cov(const Quat& q, const Matrix4d& cov_q);

}  // namespace fusion
