// Trajectory MAP estimation by Gauss-Newton on the orientation-deviation
// parametrization, with block-tridiagonal normal equations.
#pragma once

#include <optional>

#include "fusion/gauss_newton.hpp"
#include "fusion/types.hpp"

namespace fusion {

struct EstimatorOptions {
  bool use_mag = true;
  bool estimate_bias = false;
  // Overrides the vector-observation initial orientation; required when the
  // series has no magnetometer data.
  std::optional<Quat> init_orientation;
  // Optional initial linearization trajectory; defaults to dead-reckoning
  // from the initial orientation.
  std::optional<std::vector<Quat>> init_trace;
};

struct SmootherResult {
  EstimateTrace trace;
  BiasEstimate bias;  // meaningful when options.estimate_bias
  double objective = 0.0;
  std::vector<double> objective_history;  // accepted iterates, non-increasing
};

// MAP orientation trajectory over eta_{1:N} (optionally with a constant
// gyroscope bias appended as a global unknown), relinearized every accepted
// iteration. Covariances come from the inverse approximate Hessian.
SmootherResult smooth_orientation(const MeasurementSeries& meas,
                                  const NoiseModel& noise, const Environment& env,
                                  const GaussNewtonSettings& settings = {},
                                  const EstimatorOptions& options = {});

// MAP over the 9-dimensional (p, v, eta) trajectory using inertial
// measurements as dynamics inputs and position measurements; magnetometer
// free. The initial orientation defaults to identity with the wide prior.
SmootherResult smooth_pose(const MeasurementSeries& meas, const NoiseModel& noise,
                           const Environment& env,
                           const GaussNewtonSettings& settings = {},
                           const EstimatorOptions& options = {});

// Shared by the estimators: initial orientation from the options or the
// first accelerometer/magnetometer samples.
Quat initial_orientation(const MeasurementSeries& meas, const Environment& env,
                         const EstimatorOptions& options);

}  // namespace fusion
