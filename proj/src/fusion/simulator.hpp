// Ground-truth trajectory generation, noisy measurement synthesis and the
// gyroscope dead-reckoning baseline.
#pragma once

#include <cstdint>
#include <optional>
#include <random>

#include "fusion/types.hpp"

namespace fusion {

// Seeded Gaussian source. Box-Muller on top of mt19937_64 keeps the draw
// sequence identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double gauss();
  Vector3d gauss3() { return Vector3d(gauss(), gauss(), gauss()); }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

enum class ScenarioKind {
  kOrientationDefault,       // stationary, then smooth rotations about x, y, z
  kOrientationMagDisturbed,  // stationary with a magnetic-field offset window
  kPoseStationary,
  kPoseConstAcc,             // 1 m/s^2 in y
  kPoseRandAcc,              // per-sample N(0, rand_acc_sigma^2) in y
};

struct MagDisturbance {
  Vector3d offset = Vector3d::Zero();
  int first = 0;  // 1-based sample indices, inclusive
  int last = -1;
};

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::kOrientationDefault;
  int samples = 400;
  double sample_period = 1.0;
  NoiseModel noise;
  Environment env;
  Vector3d gyro_bias = Vector3d::Zero();
  std::optional<MagDisturbance> mag_disturbance;
  double rand_acc_sigma = 1.0;  // std dev of the y-acceleration draws
  std::uint64_t seed = 0;

  void validate() const;
};

// Kinematically consistent ground truth for the configured scenario. The
// orientation scenario holds still for 100 samples, then rotates about each
// body axis in turn with a raised-cosine rate pulse totalling 90 degrees.
GroundTruth simulate_truth(const ScenarioConfig& config);

// Inverts the measurement models with seeded Gaussian noise:
//   y_gyr = omega + bias + e,  y_acc = R^bn (a - g) + e,  y_mag = R^bn m + e,
//   y_pos = p + e (pose scenarios only).
// The magnetic disturbance offset is added inside its window, unnormalized.
MeasurementSeries generate_measurements(const GroundTruth& truth,
                                        const ScenarioConfig& config);

// Pure strapdown integration: gyro for orientation and, when position
// columns are wanted, gravity-compensated double integration for pose.
EstimateTrace dead_reckon(const MeasurementSeries& meas, const Environment& env,
                          const Quat& q_init,
                          const Vector3d& p_init = Vector3d::Zero(),
                          const Vector3d& v_init = Vector3d::Zero(),
                          bool integrate_position = false);

}  // namespace fusion
