// Gyroscope-bias calibration: MAP estimates through the bias-augmented
// smoother and filters, and ML estimates by prediction-error minimization
// with a quasi-Newton outer loop around the deviation-state EKF.
#pragma once

#include "fusion/filters.hpp"
#include "fusion/smoother.hpp"

namespace fusion {

struct MlSettings {
  double gradient_step = 1e-6;  // scaled by max(1, |theta_i|)
  int max_iterations = 100;
  double gradient_tol = 1.0;    // infinity norm of the numeric gradient
  Vector3d initial_theta = Vector3d::Zero();
};

struct MapFilterMethod {
  enum Kind { kOptFilter, kEkfQuat, kEkfDev } kind = kEkfDev;
};

// Joint MAP over the trajectory and a constant bias; the bias marginal
// covariance comes from the corresponding Hessian block.
std::pair<EstimateTrace, BiasEstimate> map_bias_smoothing(
    const MeasurementSeries& meas, const NoiseModel& noise, const Environment& env,
    const GaussNewtonSettings& settings = {}, const EstimatorOptions& options = {});

// Slowly time-varying bias as an augmented filter state (random walk).
// Returns the per-step trace plus the final-step bias estimate.
std::pair<EstimateTrace, BiasEstimate> map_bias_filtering(
    const MeasurementSeries& meas, const NoiseModel& noise, const Environment& env,
    MapFilterMethod method = {}, const EstimatorOptions& options = {});

// Negative log-likelihood of the one-step-ahead predictions of the
// deviation-state EKF run with a fixed candidate bias theta.
double ml_objective(const Vector3d& theta, const MeasurementSeries& meas,
                    const NoiseModel& noise, const Environment& env,
                    const EstimatorOptions& options = {});

// BFGS with central-difference gradients on ml_objective.
BiasEstimate ml_bias_estimate(const MeasurementSeries& meas, const NoiseModel& noise,
                              const Environment& env, const MlSettings& settings = {},
                              const EstimatorOptions& options = {});

// Runs the MAP smoother under each prior width and reports the estimates for
// comparison against the ML estimate on the same data.
struct ShrinkageRow {
  double prior_sigma = 0.0;  // 0 marks the ML row
  Vector3d estimate = Vector3d::Zero();
  std::string method;
};
std::vector<ShrinkageRow> map_shrinkage_study(const MeasurementSeries& meas,
                                              const NoiseModel& noise,
                                              const Environment& env,
                                              const std::vector<double>& prior_sigmas,
                                              const EstimatorOptions& options = {});

}  // namespace fusion
