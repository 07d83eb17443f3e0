#include "fusion/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace fusion {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(line);
  while (std::getline(ss, item, sep)) out.push_back(item);
  if (!line.empty() && line.back() == sep) out.push_back("");
  return out;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_number(const std::string& token, int row, int col) {
  try {
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size() || !std::isfinite(v)) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw IoError("parse-error", "bad number at row " + std::to_string(row) +
                                     ", column " + std::to_string(col) + ": '" +
                                     token + "'");
  }
}

void write_row(std::FILE* f, const std::vector<double>& vals) {
  for (std::size_t i = 0; i < vals.size(); ++i) {
    std::fprintf(f, i == 0 ? "%.17g" : ",%.17g", vals[i]);
  }
  std::fprintf(f, "\n");
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("io-error", "cannot open " + path);
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw IoError("parse-error", "empty file " + path);
  for (auto& h : split(trim(line), ',')) t.header.push_back(trim(h));
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    const std::string s = trim(line);
    if (s.empty()) continue;
    const auto tokens = split(s, ',');
    if (tokens.size() != t.header.size()) {
      throw IoError("parse-error", "ragged row " + std::to_string(row) + ": got " +
                                       std::to_string(tokens.size()) + " fields, want " +
                                       std::to_string(t.header.size()));
    }
    std::vector<double> vals;
    vals.reserve(tokens.size());
    for (std::size_t c = 0; c < tokens.size(); ++c) {
      vals.push_back(parse_number(trim(tokens[c]), row, static_cast<int>(c + 1)));
    }
    t.rows.push_back(std::move(vals));
  }
  if (t.rows.size() < 2) {
    throw IoError("parse-error", "need at least two data rows in " + path);
  }
  return t;
}

// Validates the time column and returns the sample period.
double check_time(const Table& t) {
  const double T = t.rows[1][0] - t.rows[0][0];
  if (!(T > 0.0)) {
    throw IoError("parse-error", "non-monotone time column at row 3");
  }
  for (std::size_t i = 1; i < t.rows.size(); ++i) {
    const double dt = t.rows[i][0] - t.rows[i - 1][0];
    if (!(dt > 0.0)) {
      throw IoError("parse-error",
                    "non-monotone time column at row " + std::to_string(i + 2));
    }
    if (std::abs(dt - T) > 1e-9 * T) {
      throw IoError("parse-error",
                    "non-uniform sample period at row " + std::to_string(i + 2));
    }
  }
  return T;
}

void expect_header(const Table& t, const std::vector<std::string>& want,
                   std::size_t upto) {
  for (std::size_t i = 0; i < upto; ++i) {
    if (i >= t.header.size() || t.header[i] != want[i]) {
      throw IoError("parse-error", "malformed header: expected '" + want[i] +
                                       "' in column " + std::to_string(i + 1));
    }
  }
}

}  // namespace

MeasurementSeries load_measurements(const std::string& path) {
  const Table t = read_table(path);
  const std::vector<std::string> base = {"t",     "gyr_x", "gyr_y", "gyr_z",
                                         "acc_x", "acc_y", "acc_z"};
  expect_header(t, base, base.size());
  bool has_mag = false, has_pos = false;
  std::size_t col = base.size();
  if (col < t.header.size() && t.header[col] == "mag_x") {
    expect_header(t, {"t", "gyr_x", "gyr_y", "gyr_z", "acc_x", "acc_y", "acc_z",
                      "mag_x", "mag_y", "mag_z"},
                  col + 3);
    has_mag = true;
    col += 3;
  }
  if (col < t.header.size() && t.header[col] == "pos_x") {
    if (t.header.size() < col + 3 || t.header[col + 1] != "pos_y" ||
        t.header[col + 2] != "pos_z") {
      throw IoError("parse-error", "malformed position columns");
    }
    has_pos = true;
    col += 3;
  }
  if (col != t.header.size()) {
    throw IoError("parse-error", "unexpected trailing columns in " + path);
  }

  MeasurementSeries m;
  m.sample_period = check_time(t);
  for (const auto& r : t.rows) {
    m.gyr.emplace_back(r[1], r[2], r[3]);
    m.acc.emplace_back(r[4], r[5], r[6]);
    std::size_t c = 7;
    if (has_mag) {
      m.mag.emplace_back(r[c], r[c + 1], r[c + 2]);
      c += 3;
    }
    if (has_pos) {
      m.pos.emplace_back(r[c], r[c + 1], r[c + 2]);
    }
  }
  return m;
}

void save_measurements(const std::string& path, const MeasurementSeries& meas) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("io-error", "cannot write " + path);
  std::string header = "t,gyr_x,gyr_y,gyr_z,acc_x,acc_y,acc_z";
  if (meas.has_mag()) header += ",mag_x,mag_y,mag_z";
  if (meas.has_pos()) header += ",pos_x,pos_y,pos_z";
  std::fprintf(f, "%s\n", header.c_str());
  for (std::size_t i = 0; i < meas.size(); ++i) {
    std::vector<double> row = {static_cast<double>(i) * meas.sample_period};
    for (int k = 0; k < 3; ++k) row.push_back(meas.gyr[i](k));
    for (int k = 0; k < 3; ++k) row.push_back(meas.acc[i](k));
    if (meas.has_mag())
      for (int k = 0; k < 3; ++k) row.push_back(meas.mag[i](k));
    if (meas.has_pos())
      for (int k = 0; k < 3; ++k) row.push_back(meas.pos[i](k));
    write_row(f, row);
  }
  std::fclose(f);
}

GroundTruth load_truth(const std::string& path) {
  const Table t = read_table(path);
  expect_header(t, {"t", "q0", "q1", "q2", "q3"}, 5);
  const bool has_pose = t.header.size() >= 11;
  GroundTruth g;
  g.sample_period = check_time(t);
  for (const auto& r : t.rows) {
    g.q.push_back(Quat(r[1], r[2], r[3], r[4]).normalized());
    if (has_pose) {
      g.p.emplace_back(r[5], r[6], r[7]);
      g.v.emplace_back(r[8], r[9], r[10]);
    }
  }
  return g;
}

void save_truth(const std::string& path, const GroundTruth& truth) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("io-error", "cannot write " + path);
  const bool pose = !truth.p.empty();
  std::fprintf(f, "t,q0,q1,q2,q3%s\n", pose ? ",p_x,p_y,p_z,v_x,v_y,v_z" : "");
  for (std::size_t i = 0; i < truth.size(); ++i) {
    std::vector<double> row = {static_cast<double>(i) * truth.sample_period};
    const Vector4d q = truth.q[i].to_vec4();
    for (int k = 0; k < 4; ++k) row.push_back(q(k));
    if (pose) {
      for (int k = 0; k < 3; ++k) row.push_back(truth.p[i](k));
      for (int k = 0; k < 3; ++k) row.push_back(truth.v[i](k));
    }
    write_row(f, row);
  }
  std::fclose(f);
}

EstimateTrace load_trace(const std::string& path) {
  const Table t = read_table(path);
  expect_header(t, {"t", "q0", "q1", "q2", "q3"}, 5);
  EstimateTrace tr;
  tr.sample_period = check_time(t);
  std::size_t col = 5;
  auto has = [&](const std::string& name) {
    return col < t.header.size() && t.header[col] == name;
  };
  const bool pose = has("p_x");
  if (pose) col += 6;
  const bool bias = has("bias_x");
  if (bias) col += 3;
  const bool sigmas = has("sig_roll_deg");
  if (sigmas) col += 3;
  const bool bias_sigmas = has("sig_bias_x");
  for (const auto& r : t.rows) {
    tr.q.push_back(Quat(r[1], r[2], r[3], r[4]).normalized());
    std::size_t c = 5;
    if (pose) {
      tr.p.emplace_back(r[c], r[c + 1], r[c + 2]);
      tr.v.emplace_back(r[c + 3], r[c + 4], r[c + 5]);
      c += 6;
    }
    if (bias) {
      tr.bias.emplace_back(r[c], r[c + 1], r[c + 2]);
      c += 3;
    }
    if (sigmas) {
      constexpr double d2r = M_PI / 180.0;
      Matrix3d cov = Matrix3d::Zero();
      cov(0, 0) = std::pow(r[c] * d2r, 2);
      cov(1, 1) = std::pow(r[c + 1] * d2r, 2);
      cov(2, 2) = std::pow(r[c + 2] * d2r, 2);
      tr.cov_ori.push_back(cov);
      c += 3;
    }
    if (bias_sigmas) {
      Matrix3d cov = Matrix3d::Zero();
      for (int k = 0; k < 3; ++k) cov(k, k) = r[c + k] * r[c + k];
      tr.cov_bias.push_back(cov);
    }
  }
  return tr;
}

void save_trace(const std::string& path, const EstimateTrace& trace) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("io-error", "cannot write " + path);
  std::string header = "t,q0,q1,q2,q3";
  if (trace.has_pose()) header += ",p_x,p_y,p_z,v_x,v_y,v_z";
  if (trace.has_bias()) header += ",bias_x,bias_y,bias_z";
  const bool sigmas = !trace.cov_ori.empty();
  if (sigmas) header += ",sig_roll_deg,sig_pitch_deg,sig_heading_deg";
  const bool bias_sigmas = !trace.cov_bias.empty();
  if (bias_sigmas) header += ",sig_bias_x,sig_bias_y,sig_bias_z";
  std::fprintf(f, "%s\n", header.c_str());
  constexpr double r2d = 180.0 / M_PI;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    std::vector<double> row = {static_cast<double>(i) * trace.sample_period};
    const Vector4d q = trace.q[i].to_vec4();
    for (int k = 0; k < 4; ++k) row.push_back(q(k));
    if (trace.has_pose()) {
      for (int k = 0; k < 3; ++k) row.push_back(trace.p[i](k));
      for (int k = 0; k < 3; ++k) row.push_back(trace.v[i](k));
    }
    if (trace.has_bias()) {
      for (int k = 0; k < 3; ++k) row.push_back(trace.bias[i](k));
    }
    if (sigmas) {
      // Roll/pitch/heading sigma ordering matches the deviation components.
      for (int k = 0; k < 3; ++k) {
        row.push_back(r2d * std::sqrt(std::max(0.0, trace.cov_ori[i](k, k))));
      }
    }
    if (bias_sigmas) {
      for (int k = 0; k < 3; ++k) {
        row.push_back(std::sqrt(std::max(0.0, trace.cov_bias[i](k, k))));
      }
    }
    write_row(f, row);
  }
  std::fclose(f);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("io-error", "cannot open " + path);
  RunConfig cfg;
  std::string line, section;
  int row = 0;
  auto num = [&](const std::string& v) { return parse_number(v, row, 1); };
  while (std::getline(in, line)) {
    ++row;
    std::string s = trim(line);
    const auto hash = s.find('#');
    if (hash != std::string::npos) s = trim(s.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw IoError("parse-error", "bad section at line " +
                                                            std::to_string(row));
      section = trim(s.substr(1, s.size() - 2));
      if (section != "scenario" && section != "noise" && section != "environment") {
        throw IoError("parse-error", "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw IoError("parse-error", "expected key = value at line " + std::to_string(row));
    }
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (section == "noise") {
      if (key == "sigma_gyr") cfg.noise.sigma_gyr = num(value);
      else if (key == "sigma_acc") cfg.noise.sigma_acc = num(value);
      else if (key == "sigma_mag") cfg.noise.sigma_mag = num(value);
      else if (key == "sigma_pos") cfg.noise.sigma_pos = num(value);
      else if (key == "sigma_ori_prior") cfg.noise.sigma_ori_prior = num(value);
      else if (key == "sigma_vel_prior") cfg.noise.sigma_vel_prior = num(value);
      else if (key == "sigma_bias_prior") cfg.noise.sigma_bias_prior = num(value);
      else if (key == "sigma_bias_walk") cfg.noise.sigma_bias_walk = num(value);
      else throw IoError("parse-error", "unknown key '" + key + "' in [noise]");
    } else if (section == "environment") {
      if (key == "gravity_z") cfg.env.gravity_n = Vector3d(0, 0, num(value));
      else if (key == "dip_deg")
        cfg.env.mag_field_n = Environment::default_mag_field(num(value) * M_PI / 180.0);
      else throw IoError("parse-error", "unknown key '" + key + "' in [environment]");
    } else if (section == "scenario") {
      if (key == "kind") cfg.scenario = value;
      else if (key == "samples") cfg.samples = static_cast<int>(num(value));
      else if (key == "sample_period") cfg.sample_period = num(value);
      else if (key == "rand_acc_sigma") cfg.rand_acc_sigma = num(value);
      else if (key == "gyro_bias_x") cfg.gyro_bias(0) = num(value);
      else if (key == "gyro_bias_y") cfg.gyro_bias(1) = num(value);
      else if (key == "gyro_bias_z") cfg.gyro_bias(2) = num(value);
      else if (key == "mag_disturbance") cfg.mag_disturbance = num(value) != 0.0;
      else if (key == "mag_disturbance_first") cfg.mag_disturbance_first = static_cast<int>(num(value));
      else if (key == "mag_disturbance_last") cfg.mag_disturbance_last = static_cast<int>(num(value));
      else if (key == "mag_disturbance_x") cfg.mag_disturbance_offset(0) = num(value);
      else if (key == "mag_disturbance_y") cfg.mag_disturbance_offset(1) = num(value);
      else if (key == "mag_disturbance_z") cfg.mag_disturbance_offset(2) = num(value);
      else throw IoError("parse-error", "unknown key '" + key + "' in [scenario]");
    } else {
      throw IoError("parse-error", "key outside any section at line " + std::to_string(row));
    }
  }
  return cfg;
}

}  // namespace fusion
