#include "fusion/simulator.hpp"

#include <cmath>
#include <stdexcept>

namespace fusion {

double Rng::gauss() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // Box-Muller; u1 in (0, 1].
  const double u1 =
      (static_cast<double>(engine_()) + 1.0) / (static_cast<double>(engine_.max()) + 2.0);
  const double u2 =
      static_cast<double>(engine_()) / (static_cast<double>(engine_.max()) + 1.0);
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * M_PI * u2);
  have_spare_ = true;
  return r * std::cos(2.0 * M_PI * u2);
}

void ScenarioConfig::validate() const {
  if (samples < 2) throw std::invalid_argument("scenario needs at least 2 samples");
  if (!(sample_period > 0.0)) throw std::invalid_argument("sample period must be positive");
  noise.validate();
  if (mag_disturbance) {
    if (mag_disturbance->first < 1 || mag_disturbance->last > samples ||
        mag_disturbance->first > mag_disturbance->last) {
      throw std::invalid_argument("disturbance window outside [1, N]");
    }
  }
}

namespace {

bool is_pose(ScenarioKind k) {
  return k == ScenarioKind::kPoseStationary || k == ScenarioKind::kPoseConstAcc ||
         k == ScenarioKind::kPoseRandAcc;
}

// Raised-cosine angular-rate pulse integrating to `total_angle` over
// samples [first, last) of the given axis.
void add_rotation_segment(std::vector<Vector3d>& omega, int first, int last,
                          int axis, double total_angle, double T) {
  const int n = last - first;
  if (n <= 0) return;
  const double duration = n * T;
  const double peak = 2.0 * total_angle / duration;
  for (int i = 0; i < n; ++i) {
    const double phase = (i + 0.5) / n;
    omega[first + i](axis) = 0.5 * peak * (1.0 - std::cos(2.0 * M_PI * phase));
  }
}

}  // namespace

GroundTruth simulate_truth(const ScenarioConfig& config) {
  config.validate();
  const int N = config.samples;
  const double T = config.sample_period;

  GroundTruth truth;
  truth.sample_period = T;
  truth.q.assign(N, Quat::identity());
  truth.omega.assign(N, Vector3d::Zero());
  truth.p.assign(N, Vector3d::Zero());
  truth.v.assign(N, Vector3d::Zero());
  truth.a.assign(N, Vector3d::Zero());

  switch (config.kind) {
    case ScenarioKind::kOrientationDefault: {
      const int rest = std::min(100, N);
      const int per_axis = (N - rest) / 3;
      for (int axis = 0; axis < 3; ++axis) {
        const int first = rest + axis * per_axis;
        const int last = (axis == 2) ? N : first + per_axis;
        add_rotation_segment(truth.omega, first, last, axis, M_PI / 2.0, T);
      }
      break;
    }
    case ScenarioKind::kOrientationMagDisturbed:
      break;  // stationary; the disturbance only affects the magnetometer
    case ScenarioKind::kPoseStationary:
      break;
    case ScenarioKind::kPoseConstAcc:
      // Constant 1 m/s^2 horizontal acceleration; along x the coupled tilt
      // ambiguity shows up in the roll angle.
      for (auto& a : truth.a) a = Vector3d(1.0, 0.0, 0.0);
      break;
    case ScenarioKind::kPoseRandAcc: {
      Rng rng(config.seed ^ 0x9e3779b97f4a7c15ull);  // separate stream from the noise
      for (auto& a : truth.a) a = Vector3d(0.0, config.rand_acc_sigma * rng.gauss(), 0.0);
      break;
    }
  }

  for (int t = 0; t + 1 < N; ++t) {
    truth.q[t + 1] = (truth.q[t] * exp_q(0.5 * T * truth.omega[t])).normalized();
    truth.p[t + 1] = truth.p[t] + T * truth.v[t] + 0.5 * T * T * truth.a[t];
    truth.v[t + 1] = truth.v[t] + T * truth.a[t];
  }
  return truth;
}

MeasurementSeries generate_measurements(const GroundTruth& truth,
                                        const ScenarioConfig& config) {
  config.validate();
  const int N = static_cast<int>(truth.size());
  const double T = truth.sample_period;
  const NoiseModel& noise = config.noise;
  const Environment& env = config.env;
  const bool pose = is_pose(config.kind);

  MeasurementSeries meas;
  meas.sample_period = T;
  meas.gyr.reserve(N);
  meas.acc.reserve(N);
  meas.mag.reserve(N);
  if (pose) meas.pos.reserve(N);

  Rng rng(config.seed);
  for (int t = 0; t < N; ++t) {
    const Matrix3d Rbn = quat_to_rotmat(truth.q[t]).transpose();
    meas.gyr.push_back(truth.omega[t] + config.gyro_bias + noise.sigma_gyr * rng.gauss3());
    meas.acc.push_back(Rbn * (truth.a[t] - env.gravity_n) + noise.sigma_acc * rng.gauss3());
    Vector3d ym = Rbn * env.mag_field_n + noise.sigma_mag * rng.gauss3();
    if (config.mag_disturbance) {
      const int sample = t + 1;  // window is 1-based inclusive
      if (sample >= config.mag_disturbance->first && sample <= config.mag_disturbance->last) {
        ym += config.mag_disturbance->offset;
      }
    }
    meas.mag.push_back(ym);
    if (pose) {
      meas.pos.push_back(truth.p[t] + noise.sigma_pos * rng.gauss3());
    }
  }
  return meas;
}

EstimateTrace dead_reckon(const MeasurementSeries& meas, const Environment& env,
                          const Quat& q_init, const Vector3d& p_init,
                          const Vector3d& v_init, bool integrate_position) {
  if (meas.size() == 0) throw std::invalid_argument("empty measurement series");
  const int N = static_cast<int>(meas.size());
  const double T = meas.sample_period;

  EstimateTrace trace;
  trace.sample_period = T;
  trace.q.assign(N, q_init.normalized());
  if (integrate_position) {
    trace.p.assign(N, p_init);
    trace.v.assign(N, v_init);
  }
  for (int t = 0; t + 1 < N; ++t) {
    trace.q[t + 1] = (trace.q[t] * exp_q(0.5 * T * meas.gyr[t])).normalized();
    if (integrate_position) {
      const Vector3d acc_n = quat_to_rotmat(trace.q[t]) * meas.acc[t] + env.gravity_n;
      trace.p[t + 1] = trace.p[t] + T * trace.v[t] + 0.5 * T * T * acc_n;
      trace.v[t + 1] = trace.v[t] + T * acc_n;
    }
  }
  return trace;
}

}  // namespace fusion
