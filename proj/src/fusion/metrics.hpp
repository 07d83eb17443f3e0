// Error metrics: per-sample orientation errors via the difference quaternion,
// RMSE summaries, and the Allan deviation for stationary noise analysis.
#pragma once

#include <array>
#include <vector>

#include "fusion/types.hpp"

namespace fusion {

// Roll/pitch/heading errors in degrees per sample; position error in meters
// when both traces carry positions.
struct ErrorTrace {
  std::vector<double> roll_deg;
  std::vector<double> pitch_deg;
  std::vector<double> heading_deg;
  std::vector<double> position_m;

  std::size_t size() const { return roll_deg.size(); }
};

struct RmseSummary {
  double roll_deg = 0.0;
  double pitch_deg = 0.0;
  double heading_deg = 0.0;
  double position_m = 0.0;
  bool has_position = false;
  int runs = 1;
};

// Difference quaternion q_est (x) q_ref^c, scalar part canonicalized, then
// converted to Euler angles. Throws on length mismatch.
ErrorTrace orientation_error(const EstimateTrace& est, const GroundTruth& truth);

RmseSummary rmse(const ErrorTrace& errors);
// Mean RMSE over Monte Carlo runs (component-wise mean of per-run RMSEs).
RmseSummary mean_rmse(const std::vector<RmseSummary>& runs);

struct AllanResult {
  std::vector<double> cluster_time_s;            // strictly increasing
  std::vector<std::array<double, 3>> adev;       // per-axis deviation
  double fitted_slope = 0.0;                     // log-log slope over all points
};

// Non-overlapping Allan deviation of a 3-axis series sampled at period T for
// the given cluster sizes (in samples). Throws when the series is shorter
// than twice the largest cluster.
AllanResult allan_deviation(const std::vector<Vector3d>& series, double T,
                            const std::vector<int>& cluster_sizes);

}  // namespace fusion
