#include "fusion/metrics.hpp"

#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fusion {

ErrorTrace orientation_error(const EstimateTrace& est, const GroundTruth& truth) {
  if (est.size() != truth.size()) {
    throw std::invalid_argument("estimate and truth lengths differ");
  }
  const bool with_pos = est.has_pose() && !truth.p.empty();
  ErrorTrace err;
  const int N = static_cast<int>(est.size());
  err.roll_deg.reserve(N);
  err.pitch_deg.reserve(N);
  err.heading_deg.reserve(N);
  if (with_pos) err.position_m.reserve(N);
  constexpr double kRad2Deg = 180.0 / M_PI;
  for (int t = 0; t < N; ++t) {
    const Quat dq = (est.q[t] * truth.q[t].conj()).canonical().normalized();
    const EulerAngles e = rotmat_to_euler(quat_to_rotmat(dq));
    err.roll_deg.push_back(kRad2Deg * e.roll);
    err.pitch_deg.push_back(kRad2Deg * e.pitch);
    err.heading_deg.push_back(kRad2Deg * e.yaw);
    // Per-axis position RMSE convention: ||dp|| / sqrt(3) squares to the
    // mean over the three axis errors.
    if (with_pos) {
      err.position_m.push_back((est.p[t] - truth.p[t]).norm() / std::sqrt(3.0));
    }
  }
  return err;
}

namespace {
double rms(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}
}  // namespace

RmseSummary rmse(const ErrorTrace& errors) {
  if (errors.size() == 0) throw std::invalid_argument("empty error trace");
  RmseSummary s;
  s.roll_deg = rms(errors.roll_deg);
  s.pitch_deg = rms(errors.pitch_deg);
  s.heading_deg = rms(errors.heading_deg);
  if (!errors.position_m.empty()) {
    s.position_m = rms(errors.position_m);
    s.has_position = true;
  }
  return s;
}

RmseSummary mean_rmse(const std::vector<RmseSummary>& runs) {
  if (runs.empty()) throw std::invalid_argument("no runs to average");
  RmseSummary m;
  m.runs = static_cast<int>(runs.size());
  m.has_position = runs.front().has_position;
  for (const auto& r : runs) {
    m.roll_deg += r.roll_deg;
    m.pitch_deg += r.pitch_deg;
    m.heading_deg += r.heading_deg;
    m.position_m += r.position_m;
  }
  const double n = static_cast<double>(runs.size());
  m.roll_deg /= n;
  m.pitch_deg /= n;
  m.heading_deg /= n;
  m.position_m /= n;
  return m;
}

AllanResult allan_deviation(const std::vector<Vector3d>& series, double T,
                            const std::vector<int>& cluster_sizes) {
  if (cluster_sizes.empty()) throw std::invalid_argument("no cluster sizes");
  const int N = static_cast<int>(series.size());
  AllanResult out;
  for (int n : cluster_sizes) {
    const int K = N / n;  // number of non-overlapping clusters
    if (n < 1 || K < 2) {
      throw std::invalid_argument("series too short for the largest cluster");
    }
    // Cluster means, then half the mean squared successive difference.
    std::vector<Vector3d> means(K, Vector3d::Zero());
    for (int k = 0; k < K; ++k) {
      for (int i = 0; i < n; ++i) means[k] += series[k * n + i];
      means[k] /= static_cast<double>(n);
    }
    Vector3d acc = Vector3d::Zero();
    for (int k = 0; k + 1 < K; ++k) {
      const Vector3d d = means[k + 1] - means[k];
      acc += d.cwiseProduct(d);
    }
    acc /= 2.0 * static_cast<double>(K - 1);
    out.cluster_time_s.push_back(n * T);
    out.adev.push_back({std::sqrt(acc(0)), std::sqrt(acc(1)), std::sqrt(acc(2))});
  }

  // Least-squares slope of log(adev) vs log(T_c), averaged over the axes.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (std::size_t i = 0; i < out.cluster_time_s.size(); ++i) {
    const double x = std::log(out.cluster_time_s[i]);
    for (int a = 0; a < 3; ++a) {
      if (out.adev[i][a] <= 0.0) continue;
      const double y = std::log(out.adev[i][a]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++count;
    }
  }
  if (count >= 2) {
    out.fitted_slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  }
  return out;
}

}  // namespace fusion
