// Monte Carlo reproduction of the published simulation studies: orientation
// estimator comparisons, the pose study, and the gyroscope-bias studies.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fusion/metrics.hpp"
#include "fusion/simulator.hpp"

namespace fusion {

// Runs fn(i) for i in [0, n) across worker threads; results must be written
// to caller-provided slots indexed by i so the aggregate is order-independent.
void parallel_for(int n, const std::function<void(int)>& fn, int threads = 0);

struct OrientationRow {
  std::string estimator;
  RmseSummary mean;                 // mean RMSE over the runs
  Vector3d mean_sigma_deg = Vector3d::Zero();  // reported sigma, averaged
};

struct PoseRow {
  std::string scenario;
  RmseSummary mean;  // includes position RMSE
};

struct BiasRow {
  std::string method;
  double prior_sigma = 0.0;  // 0 for ML
  Vector3d mean = Vector3d::Zero();
  Vector3d std_dev = Vector3d::Zero();
};

struct TableResult {
  std::string table;
  int runs = 0;
  std::uint64_t seed = 0;
  std::vector<OrientationRow> orientation_rows;
  std::vector<PoseRow> pose_rows;
  std::vector<BiasRow> bias_rows;

  std::string to_json() const;  // schema_version tagged document
  std::string to_text() const;  // human-readable table
};

// Table ids: T4.2 (no magnetometer), T4.4 (full comparison), T4.5
// (perturbed initialization), T4.6 (pose scenarios), T5.1 (estimated bias),
// T5.2 (bias estimate statistics; pass runs = 500 for the published layout).
TableResult run_table(const std::string& table_id, int runs, std::uint64_t seed,
                      int threads = 0);

// Default study configuration shared by the tables.
ScenarioConfig default_orientation_config(std::uint64_t seed);

}  // namespace fusion
