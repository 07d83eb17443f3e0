// File formats: measurement/truth/trace CSV schemas, key = value config
// files, and the error classes reported on the command line.
#pragma once

#include <map>
#include <stdexcept>
#include <string>

#include "fusion/types.hpp"

namespace fusion {

// Errors carry a short machine-parsable class tag plus detail text.
class IoError : public std::runtime_error {
 public:
  IoError(std::string error_class, const std::string& detail)
      : std::runtime_error(error_class + ": " + detail),
        error_class_(std::move(error_class)) {}
  const std::string& error_class() const { return error_class_; }

 private:
  std::string error_class_;
};

// Measurement CSV: header
//   t,gyr_x,gyr_y,gyr_z,acc_x,acc_y,acc_z[,mag_x,mag_y,mag_z][,pos_x,pos_y,pos_z]
// SI units, time strictly increasing and uniform. Values are written with 17
// significant digits so a save/load round trip is bit-exact.
MeasurementSeries load_measurements(const std::string& path);
void save_measurements(const std::string& path, const MeasurementSeries& meas);

// Truth CSV: t,q0,q1,q2,q3[,p_x,p_y,p_z,v_x,v_y,v_z]
GroundTruth load_truth(const std::string& path);
void save_truth(const std::string& path, const GroundTruth& truth);

// Trace CSV: the truth schema plus optional bias_{x,y,z} and per-angle
// sigma_{roll,pitch,heading}_deg columns.
EstimateTrace load_trace(const std::string& path);
void save_trace(const std::string& path, const EstimateTrace& trace);

// Plain-text config: [section] headers over key = value lines; '#' comments.
// Unknown sections or keys are errors.
struct RunConfig {
  NoiseModel noise;
  Environment env;
  // Scenario overrides used by the simulate subcommand.
  std::string scenario = "orientation-default";
  int samples = 400;
  double sample_period = 1.0;
  double rand_acc_sigma = 1.0;
  Vector3d gyro_bias = Vector3d::Zero();
  bool mag_disturbance = false;
  Vector3d mag_disturbance_offset = Vector3d(0.1, 0.3, 0.5);
  int mag_disturbance_first = 150;
  int mag_disturbance_last = 250;
};
RunConfig load_config(const std::string& path);

}  // namespace fusion
