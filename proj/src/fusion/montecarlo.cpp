#include "fusion/montecarlo.hpp"

#include <atomic>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "fusion/calibration.hpp"
#include "fusion/filters.hpp"
#include "fusion/smoother.hpp"

namespace fusion {

using nlohmann::json;

void parallel_for(int n, const std::function<void(int)>& fn, int threads) {
  if (threads <= 0) {
    threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads <= 0) threads = 2;
  }
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next(0);
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

ScenarioConfig default_orientation_config(std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.kind = ScenarioKind::kOrientationDefault;
  cfg.samples = 400;
  cfg.sample_period = 1.0;
  cfg.seed = seed;
  return cfg;
}

namespace {

Vector3d sigma_means(const EstimateTrace& trace) {
  Vector3d s = Vector3d::Zero();
  if (trace.cov_ori.empty()) return s;
  for (const auto& c : trace.cov_ori) {
    for (int k = 0; k < 3; ++k) s(k) += std::sqrt(std::max(0.0, c(k, k)));
  }
  return (180.0 / M_PI) * s / static_cast<double>(trace.cov_ori.size());
}

struct RunAccumulator {
  std::vector<std::vector<RmseSummary>> rmse;   // [estimator][run]
  std::vector<std::vector<Vector3d>> sigma;     // [estimator][run]
  explicit RunAccumulator(int estimators, int runs)
      : rmse(estimators, std::vector<RmseSummary>(runs)),
        sigma(estimators, std::vector<Vector3d>(runs, Vector3d::Zero())) {}
};

// Orientation comparison studies share one skeleton; `mode` switches the
// magnetometer usage and the initialization policy.
enum class OriMode { kFull, kNoMag, kPerturbedInit, kWithBias };

TableResult run_orientation_table(const std::string& id, OriMode mode, int runs,
                                  std::uint64_t seed, int threads) {
  const bool use_mag = mode != OriMode::kNoMag;
  const bool with_compl = mode == OriMode::kFull || mode == OriMode::kPerturbedInit;
  const bool with_bias = mode == OriMode::kWithBias;

  std::vector<std::string> names;
  if (with_bias) {
    names = {"smoothing", "ekf-dev"};
  } else {
    names = {"smoothing", "filt-opt", "ekf-quat", "ekf-dev"};
    if (with_compl) {
      names.push_back("compl-0.07");
      names.push_back("compl-0.7");
    }
  }
  const int ne = static_cast<int>(names.size());
  RunAccumulator acc(ne, runs);

  parallel_for(
      runs,
      [&](int r) {
        ScenarioConfig cfg = default_orientation_config(seed + r);
        if (with_bias) {
          Rng bias_rng(cfg.seed ^ 0xb1a5b1a5b1a5b1a5ull);
          cfg.gyro_bias = cfg.noise.sigma_bias_prior * bias_rng.gauss3();
        }
        const GroundTruth truth = simulate_truth(cfg);
        const MeasurementSeries meas = generate_measurements(truth, cfg);

        EstimatorOptions options;
        options.use_mag = use_mag;
        if (mode == OriMode::kNoMag) {
          options.init_orientation = truth.q.front();
        } else if (mode == OriMode::kPerturbedInit) {
          Rng init_rng(cfg.seed ^ 0x1234abcd5678ef00ull);
          const Vector3d e = cfg.noise.sigma_ori_prior * init_rng.gauss3();
          options.init_orientation = (exp_q(0.5 * e) * truth.q.front()).normalized();
        }
        EstimatorOptions bias_options = options;
        bias_options.estimate_bias = with_bias;

        int idx = 0;
        const auto record = [&](const EstimateTrace& trace) {
          acc.rmse[idx][r] = rmse(orientation_error(trace, truth));
          acc.sigma[idx][r] = sigma_means(trace);
          ++idx;
        };
        record(smooth_orientation(meas, cfg.noise, cfg.env, {}, bias_options).trace);
        if (with_bias) {
          record(ekf_orientation_deviation(meas, cfg.noise, cfg.env, bias_options));
        } else {
          record(filter_orientation_opt(meas, cfg.noise, cfg.env,
                                        per_step_settings(), options));
          record(ekf_quaternion(meas, cfg.noise, cfg.env, options));
          record(ekf_orientation_deviation(meas, cfg.noise, cfg.env, options));
          if (with_compl) {
            record(complementary_filter(meas, cfg.noise, cfg.env, 0.07, options));
            record(complementary_filter(meas, cfg.noise, cfg.env, 0.7, options));
          }
        }
      },
      threads);

  TableResult out;
  out.table = id;
  out.runs = runs;
  out.seed = seed;
  for (int e = 0; e < ne; ++e) {
    OrientationRow row;
    row.estimator = names[e];
    row.mean = mean_rmse(acc.rmse[e]);
    for (const auto& s : acc.sigma[e]) row.mean_sigma_deg += s;
    row.mean_sigma_deg /= static_cast<double>(runs);
    out.orientation_rows.push_back(row);
  }
  return out;
}

TableResult run_pose_table(int runs, std::uint64_t seed, int threads) {
  struct Scen {
    std::string name;
    ScenarioKind kind;
    double rand_sigma;
  };
  const std::vector<Scen> scens = {
      {"stationary", ScenarioKind::kPoseStationary, 0.0},
      {"const-acc", ScenarioKind::kPoseConstAcc, 0.0},
      {"rand-acc-0.5", ScenarioKind::kPoseRandAcc, std::sqrt(0.5)},
      {"rand-acc-5", ScenarioKind::kPoseRandAcc, std::sqrt(5.0)},
  };
  TableResult out;
  out.table = "T4.6";
  out.runs = runs;
  out.seed = seed;

  for (const auto& sc : scens) {
    std::vector<RmseSummary> results(runs);
    parallel_for(
        runs,
        [&](int r) {
          ScenarioConfig cfg = default_orientation_config(seed + r);
          cfg.kind = sc.kind;
          cfg.rand_acc_sigma = sc.rand_sigma;
          const GroundTruth truth = simulate_truth(cfg);
          const MeasurementSeries meas = generate_measurements(truth, cfg);
          EstimatorOptions options;
          options.use_mag = false;
          options.init_orientation = Quat::identity();
          const auto res = smooth_pose(meas, cfg.noise, cfg.env, {}, options);
          results[r] = rmse(orientation_error(res.trace, truth));
        },
        threads);
    PoseRow row;
    row.scenario = sc.name;
    row.mean = mean_rmse(results);
    out.pose_rows.push_back(row);
  }
  return out;
}

TableResult run_bias_table(int runs, std::uint64_t seed, int threads) {
  const Vector3d true_bias(5e-2, 1e-2, -4e-2);
  const std::vector<std::pair<std::string, double>> methods = {
      {"ml", 0.0}, {"map", 0.05}, {"map", 1e-3}};
  std::vector<std::vector<Vector3d>> estimates(methods.size(),
                                               std::vector<Vector3d>(runs));

  parallel_for(
      runs,
      [&](int r) {
        ScenarioConfig cfg = default_orientation_config(seed + r);
        cfg.gyro_bias = true_bias;
        const GroundTruth truth = simulate_truth(cfg);
        const MeasurementSeries meas = generate_measurements(truth, cfg);
        estimates[0][r] = ml_bias_estimate(meas, cfg.noise, cfg.env).delta;
        for (std::size_t m = 1; m < methods.size(); ++m) {
          NoiseModel noise = cfg.noise;
          noise.sigma_bias_prior = methods[m].second;
          estimates[m][r] =
              map_bias_smoothing(meas, noise, cfg.env).second.delta;
        }
      },
      threads);

  TableResult out;
  out.table = "T5.2";
  out.runs = runs;
  out.seed = seed;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    BiasRow row;
    row.method = methods[m].first;
    row.prior_sigma = methods[m].second;
    for (const auto& e : estimates[m]) row.mean += e;
    row.mean /= static_cast<double>(runs);
    for (const auto& e : estimates[m]) {
      const Vector3d d = e - row.mean;
      row.std_dev += d.cwiseProduct(d);
    }
    row.std_dev = (row.std_dev / std::max(1, runs - 1)).cwiseSqrt();
    out.bias_rows.push_back(row);
  }
  return out;
}

}  // namespace

TableResult run_table(const std::string& table_id, int runs, std::uint64_t seed,
                      int threads) {
  if (runs < 1) throw std::invalid_argument("runs must be at least 1");
  if (table_id == "T4.4") {
    return run_orientation_table("T4.4", OriMode::kFull, runs, seed, threads);
  }
  if (table_id == "T4.2") {
    return run_orientation_table("T4.2", OriMode::kNoMag, runs, seed, threads);
  }
  if (table_id == "T4.5") {
    return run_orientation_table("T4.5", OriMode::kPerturbedInit, runs, seed, threads);
  }
  if (table_id == "T5.1") {
    return run_orientation_table("T5.1", OriMode::kWithBias, runs, seed, threads);
  }
  if (table_id == "T4.6") {
    return run_pose_table(runs, seed, threads);
  }
  if (table_id == "T5.2") {
    return run_bias_table(runs, seed, threads);
  }
  throw std::invalid_argument("unknown table id: " + table_id);
}

std::string TableResult::to_json() const {
  json doc;
  doc["schema_version"] = 1;
  doc["table"] = table;
  doc["runs"] = runs;
  doc["seed"] = seed;
  json rows = json::array();
  for (const auto& r : orientation_rows) {
    rows.push_back({{"estimator", r.estimator},
                    {"roll_deg", r.mean.roll_deg},
                    {"pitch_deg", r.mean.pitch_deg},
                    {"heading_deg", r.mean.heading_deg},
                    {"mean_sigma_deg",
                     {r.mean_sigma_deg(0), r.mean_sigma_deg(1), r.mean_sigma_deg(2)}}});
  }
  for (const auto& r : pose_rows) {
    rows.push_back({{"scenario", r.scenario},
                    {"roll_deg", r.mean.roll_deg},
                    {"pitch_deg", r.mean.pitch_deg},
                    {"heading_deg", r.mean.heading_deg},
                    {"position_m", r.mean.position_m}});
  }
  for (const auto& r : bias_rows) {
    rows.push_back({{"method", r.method},
                    {"prior_sigma", r.prior_sigma},
                    {"mean", {r.mean(0), r.mean(1), r.mean(2)}},
                    {"std", {r.std_dev(0), r.std_dev(1), r.std_dev(2)}},
                    {"runs", runs}});
  }
  doc["rows"] = rows;
  return doc.dump(2);
}

std::string TableResult::to_text() const {
  std::ostringstream os;
  os << table << " (" << runs << " runs, seed " << seed << ")\n";
  char buf[160];
  if (!orientation_rows.empty()) {
    std::snprintf(buf, sizeof(buf), "%-28s %8s %8s %9s\n", "estimator", "roll",
                  "pitch", "heading");
    os << buf;
    for (const auto& r : orientation_rows) {
      std::snprintf(buf, sizeof(buf), "%-28s %8.2f %8.2f %9.2f\n",
                    r.estimator.c_str(), r.mean.roll_deg, r.mean.pitch_deg,
                    r.mean.heading_deg);
      os << buf;
    }
  }
  if (!pose_rows.empty()) {
    std::snprintf(buf, sizeof(buf), "%-28s %8s %8s %9s %9s\n", "scenario", "roll",
                  "pitch", "heading", "pos [cm]");
    os << buf;
    for (const auto& r : pose_rows) {
      std::snprintf(buf, sizeof(buf), "%-28s %8.2f %8.2f %9.2f %9.2f\n",
                    r.scenario.c_str(), r.mean.roll_deg, r.mean.pitch_deg,
                    r.mean.heading_deg, 100.0 * r.mean.position_m);
      os << buf;
    }
  }
  if (!bias_rows.empty()) {
    std::snprintf(buf, sizeof(buf), "%-20s %-12s %27s %27s\n", "method", "prior",
                  "mean (x 1e2)", "std (x 1e4)");
    os << buf;
    for (const auto& r : bias_rows) {
      std::string prior = r.prior_sigma > 0.0 ? std::to_string(r.prior_sigma) : "-";
      std::snprintf(buf, sizeof(buf),
                    "%-20s %-12s %8.2f %8.2f %8.2f  %8.2f %8.2f %8.2f\n",
                    r.method.c_str(), prior.c_str(), 1e2 * r.mean(0), 1e2 * r.mean(1),
                    1e2 * r.mean(2), 1e4 * r.std_dev(0), 1e4 * r.std_dev(1),
                    1e4 * r.std_dev(2));
      os << buf;
    }
  }
  return os.str();
}

}  // namespace fusion
