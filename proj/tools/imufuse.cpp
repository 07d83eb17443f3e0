// Command-line front end: simulation, estimation, error metrics, Monte Carlo
// studies, gyroscope-bias calibration, Allan analysis and plot-data export.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fusion/calibration.hpp"
#include "fusion/filters.hpp"
#include "fusion/io.hpp"
#include "fusion/metrics.hpp"
#include "fusion/montecarlo.hpp"
#include "fusion/simulator.hpp"
#include "fusion/smoother.hpp"

namespace {

using nlohmann::json;
using namespace fusion;

ScenarioKind parse_scenario(const std::string& name) {
  if (name == "orientation-default") return ScenarioKind::kOrientationDefault;
  if (name == "orientation-mag-disturbed") return ScenarioKind::kOrientationMagDisturbed;
  if (name == "pose-stationary") return ScenarioKind::kPoseStationary;
  if (name == "pose-const-acc") return ScenarioKind::kPoseConstAcc;
  if (name == "pose-rand-acc") return ScenarioKind::kPoseRandAcc;
  throw IoError("bad-input", "unknown scenario kind '" + name + "'");
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("io-error", "cannot write " + path);
  out << text;
}

struct CommonOpts {
  std::string in, out, truth, config;
  std::string alg = "smooth";
  std::string mode = "orientation";
  bool no_mag = false;
  bool estimate_bias = false;
  double alpha = 0.07;
  std::uint64_t seed = 0;
  int runs = 100;
};

RunConfig maybe_config(const std::string& path) {
  return path.empty() ? RunConfig{} : load_config(path);
}

EstimateTrace run_estimator(const CommonOpts& o, const MeasurementSeries& meas,
                            const RunConfig& cfg) {
  EstimatorOptions options;
  options.use_mag = !o.no_mag;
  options.estimate_bias = o.estimate_bias;
  if (!meas.has_mag() || o.no_mag) {
    // Magless runs start from the identity with the wide orientation prior.
    options.init_orientation = Quat::identity();
  }
  if (o.mode == "pose") {
    if (o.alg == "smooth") return smooth_pose(meas, cfg.noise, cfg.env, {}, options).trace;
    if (o.alg == "filt-opt") return filter_pose_opt(meas, cfg.noise, cfg.env, per_step_settings(), options);
    if (o.alg == "ekf-quat") return ekf_pose_quaternion(meas, cfg.noise, cfg.env, options);
    if (o.alg == "ekf-dev") return ekf_pose_deviation(meas, cfg.noise, cfg.env, options);
    throw IoError("bad-input", "algorithm '" + o.alg + "' does not support pose mode");
  }
  if (o.alg == "smooth") return smooth_orientation(meas, cfg.noise, cfg.env, {}, options).trace;
  if (o.alg == "filt-opt") return filter_orientation_opt(meas, cfg.noise, cfg.env, per_step_settings(), options);
  if (o.alg == "ekf-quat") return ekf_quaternion(meas, cfg.noise, cfg.env, options);
  if (o.alg == "ekf-dev") return ekf_orientation_deviation(meas, cfg.noise, cfg.env, options);
  if (o.alg == "compl") return complementary_filter(meas, cfg.noise, cfg.env, o.alpha, options);
  throw IoError("bad-input", "unknown algorithm '" + o.alg + "'");
}

int cmd_simulate(const CommonOpts& o, const std::string& truth_out) {
  RunConfig rc = maybe_config(o.config);
  ScenarioConfig cfg;
  cfg.kind = parse_scenario(rc.scenario);
  cfg.samples = rc.samples;
  cfg.sample_period = rc.sample_period;
  cfg.noise = rc.noise;
  cfg.env = rc.env;
  cfg.env.sample_period = rc.sample_period;
  cfg.gyro_bias = rc.gyro_bias;
  cfg.rand_acc_sigma = rc.rand_acc_sigma;
  cfg.seed = o.seed;
  if (rc.mag_disturbance || cfg.kind == ScenarioKind::kOrientationMagDisturbed) {
    MagDisturbance d;
    d.offset = rc.mag_disturbance_offset;
    d.first = rc.mag_disturbance_first;
    d.last = rc.mag_disturbance_last;
    cfg.mag_disturbance = d;
  }
  const GroundTruth truth = simulate_truth(cfg);
  const MeasurementSeries meas = generate_measurements(truth, cfg);
  if (!o.out.empty()) save_measurements(o.out, meas);
  if (!truth_out.empty()) save_truth(truth_out, truth);
  return 0;
}

int cmd_estimate(const CommonOpts& o) {
  const RunConfig cfg = maybe_config(o.config);
  const MeasurementSeries meas = load_measurements(o.in);
  const EstimateTrace trace = run_estimator(o, meas, cfg);
  if (!o.out.empty()) save_trace(o.out, trace);
  json doc;
  doc["schema_version"] = 1;
  doc["algorithm"] = o.alg;
  doc["mode"] = o.mode;
  doc["samples"] = trace.size();
  doc["converged"] = trace.converged;
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int cmd_error(const CommonOpts& o) {
  const EstimateTrace est = load_trace(o.in);
  GroundTruth truth = load_truth(o.truth);
  const ErrorTrace err = orientation_error(est, truth);
  if (!o.out.empty()) {
    std::FILE* f = std::fopen(o.out.c_str(), "w");
    if (!f) throw IoError("io-error", "cannot write " + o.out);
    std::fprintf(f, "t,roll_deg,pitch_deg,heading_deg%s\n",
                 err.position_m.empty() ? "" : ",position_m");
    for (std::size_t i = 0; i < err.size(); ++i) {
      std::fprintf(f, "%.17g,%.17g,%.17g,%.17g", i * est.sample_period,
                   err.roll_deg[i], err.pitch_deg[i], err.heading_deg[i]);
      if (!err.position_m.empty()) std::fprintf(f, ",%.17g", err.position_m[i]);
      std::fprintf(f, "\n");
    }
    std::fclose(f);
  }
  const RmseSummary s = rmse(err);
  json doc;
  doc["schema_version"] = 1;
  doc["rmse"] = {{"roll_deg", s.roll_deg},
                 {"pitch_deg", s.pitch_deg},
                 {"heading_deg", s.heading_deg}};
  if (s.has_position) doc["rmse"]["position_m"] = s.position_m;
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int cmd_montecarlo(const CommonOpts& o, const std::string& table, int threads) {
  const TableResult res = run_table(table, o.runs, o.seed, threads);
  std::cout << res.to_text();
  if (!o.out.empty()) write_text_file(o.out, res.to_json());
  return 0;
}

int cmd_calibrate(const CommonOpts& o, const std::string& method) {
  const RunConfig cfg = maybe_config(o.config);
  const MeasurementSeries meas = load_measurements(o.in);
  EstimatorOptions options;
  options.use_mag = !o.no_mag;
  if (!meas.has_mag() || o.no_mag) options.init_orientation = Quat::identity();

  BiasEstimate est;
  if (method == "map-smooth") {
    est = map_bias_smoothing(meas, cfg.noise, cfg.env, {}, options).second;
    est.method = "map-smooth";
  } else if (method == "ml") {
    est = ml_bias_estimate(meas, cfg.noise, cfg.env, {}, options);
  } else {
    MapFilterMethod m;
    if (method == "map-filt-opt") m.kind = MapFilterMethod::kOptFilter;
    else if (method == "map-ekf-quat") m.kind = MapFilterMethod::kEkfQuat;
    else if (method == "map-ekf-dev") m.kind = MapFilterMethod::kEkfDev;
    else throw IoError("bad-input", "unknown calibration method '" + method + "'");
    est = map_bias_filtering(meas, cfg.noise, cfg.env, m, options).second;
  }
  json doc;
  doc["schema_version"] = 1;
  doc["method"] = est.method;
  doc["estimate_rad_per_s"] = {est.delta(0), est.delta(1), est.delta(2)};
  doc["sigma_rad_per_s"] = {std::sqrt(std::max(0.0, est.cov(0, 0))),
                            std::sqrt(std::max(0.0, est.cov(1, 1))),
                            std::sqrt(std::max(0.0, est.cov(2, 2)))};
  doc["iterations"] = est.iterations;
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int cmd_allan(const CommonOpts& o, const std::string& sensor) {
  const MeasurementSeries meas = load_measurements(o.in);
  const auto& series = sensor == "acc" ? meas.acc : meas.gyr;
  // Decade-spanning cluster sizes up to a fifth of the series.
  std::vector<int> sizes;
  for (int n = 1; n <= static_cast<int>(series.size()) / 5;) {
    sizes.push_back(n);
    const int next = static_cast<int>(n * 1.6) + 1;
    n = next;
  }
  const AllanResult res = allan_deviation(series, meas.sample_period, sizes);
  if (!o.out.empty()) {
    std::FILE* f = std::fopen(o.out.c_str(), "w");
    if (!f) throw IoError("io-error", "cannot write " + o.out);
    std::fprintf(f, "cluster_time_s,series,value\n");
    const char* axes[3] = {"x", "y", "z"};
    for (std::size_t i = 0; i < res.cluster_time_s.size(); ++i) {
      for (int a = 0; a < 3; ++a) {
        std::fprintf(f, "%.17g,%s,%.17g\n", res.cluster_time_s[i], axes[a],
                     res.adev[i][a]);
      }
    }
    std::fclose(f);
  }
  json doc;
  doc["schema_version"] = 1;
  doc["sensor"] = sensor;
  doc["fitted_slope"] = res.fitted_slope;
  doc["cluster_times_s"] = res.cluster_time_s;
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int cmd_plotdata(const CommonOpts& o, const std::string& kind) {
  std::FILE* f = std::fopen(o.out.c_str(), "w");
  if (!f) throw IoError("io-error", "cannot write " + o.out);
  const auto emit = [&](double t, const char* series, double value) {
    std::fprintf(f, "%.17g,%s,%.17g\n", t, series, value);
  };
  std::fprintf(f, "time,series,value\n");

  if (kind == "errors") {
    const EstimateTrace est = load_trace(o.in);
    const GroundTruth truth = load_truth(o.truth);
    const ErrorTrace err = orientation_error(est, truth);
    for (std::size_t i = 0; i < err.size(); ++i) {
      const double t = i * est.sample_period;
      emit(t, "roll", err.roll_deg[i]);
      emit(t, "pitch", err.pitch_deg[i]);
      emit(t, "heading", err.heading_deg[i]);
    }
  } else if (kind == "sigma") {
    const EstimateTrace est = load_trace(o.in);
    if (est.cov_ori.empty()) throw IoError("bad-input", "trace has no sigma columns");
    constexpr double r2d = 180.0 / M_PI;
    const char* names[3] = {"sigma_roll", "sigma_pitch", "sigma_heading"};
    for (std::size_t i = 0; i < est.size(); ++i) {
      for (int k = 0; k < 3; ++k) {
        emit(i * est.sample_period, names[k],
             r2d * std::sqrt(std::max(0.0, est.cov_ori[i](k, k))));
      }
    }
  } else if (kind == "bias-convergence") {
    const EstimateTrace est = load_trace(o.in);
    if (!est.has_bias() || est.cov_bias.empty()) {
      throw IoError("bad-input", "trace has no bias columns");
    }
    const char* axes[3] = {"x", "y", "z"};
    for (std::size_t i = 0; i < est.bias.size(); ++i) {
      const double t = i * est.sample_period;
      for (int k = 0; k < 3; ++k) {
        const double s = std::sqrt(std::max(0.0, est.cov_bias[i](k, k)));
        emit(t, (std::string("bias_") + axes[k]).c_str(), est.bias[i](k));
        emit(t, (std::string("bias_") + axes[k] + "_lo").c_str(), est.bias[i](k) - 3 * s);
        emit(t, (std::string("bias_") + axes[k] + "_hi").c_str(), est.bias[i](k) + 3 * s);
      }
    }
  } else if (kind == "allan") {
    const MeasurementSeries meas = load_measurements(o.in);
    std::vector<int> sizes;
    for (int n = 1; n <= static_cast<int>(meas.size()) / 5;) {
      sizes.push_back(n);
      n = static_cast<int>(n * 1.6) + 1;
    }
    const AllanResult res = allan_deviation(meas.gyr, meas.sample_period, sizes);
    const char* axes[3] = {"x", "y", "z"};
    for (std::size_t i = 0; i < res.cluster_time_s.size(); ++i) {
      for (int a = 0; a < 3; ++a) {
        emit(res.cluster_time_s[i], (std::string("gyr_") + axes[a]).c_str(),
             res.adev[i][a]);
      }
    }
  } else {
    std::fclose(f);
    throw IoError("bad-input", "unknown plot kind '" + kind + "'");
  }
  std::fclose(f);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inertial orientation and pose estimation toolbox"};
  app.require_subcommand(1);
  CommonOpts o;
  std::string truth_out, table = "T4.4", method = "map-smooth", sensor = "gyr";
  std::string kind = "errors";
  int threads = 0;

  auto* sim = app.add_subcommand("simulate", "generate a simulated data set");
  sim->add_option("--out", o.out, "measurement CSV path");
  sim->add_option("--truth", truth_out, "ground-truth CSV path");
  sim->add_option("--config", o.config, "config file");
  sim->add_option("--seed", o.seed, "RNG seed");

  auto* est = app.add_subcommand("estimate", "run an estimator on a data set");
  est->add_option("--in", o.in, "measurement CSV")->required();
  est->add_option("--out", o.out, "estimate trace CSV");
  est->add_option("--alg", o.alg, "smooth|filt-opt|ekf-quat|ekf-dev|compl");
  est->add_option("--mode", o.mode, "orientation|pose");
  est->add_flag("--no-mag", o.no_mag, "ignore magnetometer columns");
  est->add_flag("--estimate-bias", o.estimate_bias, "augment with a gyro bias state");
  est->add_option("--alpha", o.alpha, "complementary filter gain");
  est->add_option("--config", o.config, "config file");

  auto* err = app.add_subcommand("error", "orientation errors vs ground truth");
  err->add_option("--in", o.in, "estimate trace CSV")->required();
  err->add_option("--truth", o.truth, "ground-truth CSV")->required();
  err->add_option("--out", o.out, "per-sample error CSV");

  auto* mc = app.add_subcommand("montecarlo", "reproduce a simulation study");
  mc->add_option("--table", table, "T4.2|T4.4|T4.5|T4.6|T5.1|T5.2")->required();
  mc->add_option("--runs", o.runs, "number of Monte Carlo runs");
  mc->add_option("--seed", o.seed, "base seed; run r uses seed + r");
  mc->add_option("--out", o.out, "result JSON path");
  mc->add_option("--threads", threads, "worker threads (0 = auto)");

  auto* cal = app.add_subcommand("calibrate", "estimate the gyroscope bias");
  cal->add_option("--in", o.in, "measurement CSV")->required();
  cal->add_option("--method", method, "map-smooth|map-filt-opt|map-ekf-quat|map-ekf-dev|ml");
  cal->add_flag("--no-mag", o.no_mag, "ignore magnetometer columns");
  cal->add_option("--config", o.config, "config file");

  auto* allan = app.add_subcommand("allan", "Allan deviation of a series");
  allan->add_option("--in", o.in, "measurement CSV")->required();
  allan->add_option("--sensor", sensor, "gyr|acc");
  allan->add_option("--out", o.out, "long-format CSV path");

  auto* plot = app.add_subcommand("plotdata", "tidy CSV for plotting tools");
  plot->add_option("--in", o.in, "trace or measurement CSV")->required();
  plot->add_option("--truth", o.truth, "ground-truth CSV (errors kind)");
  plot->add_option("--kind", kind, "errors|sigma|bias-convergence|allan");
  plot->add_option("--out", o.out, "output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(o, truth_out);
    if (est->parsed()) return cmd_estimate(o);
    if (err->parsed()) return cmd_error(o);
    if (mc->parsed()) return cmd_montecarlo(o, table, threads);
    if (cal->parsed()) return cmd_calibrate(o, method);
    if (allan->parsed()) return cmd_allan(o, sensor);
    if (plot->parsed()) return cmd_plotdata(o, kind);
  } catch (const fusion::IoError& e) {
    std::cerr << "imufuse: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "imufuse: bad-input: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "imufuse: degenerate-input: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "imufuse: runtime-error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
