#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mpslam/measurement_model.hpp"

// Headered CSV traces. Every file starts with "# <schema>" so readers can
// refuse files from a different layout version. Doubles are written with
// %.17g: shortest exact round-trip is not needed, 17 significant digits
// reproduce the bit pattern, and output stays byte-deterministic.

namespace mpslam {

inline constexpr const char* kMeasurementsSchema = "mpslam.measurements.v1";
inline constexpr const char* kAgentSchema = "mpslam.agent.v1";
inline constexpr const char* kFeaturesSchema = "mpslam.features.v1";

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct MeasurementRow {
  int step = 0;
  int anchor_id = 0;
  int meas_index = 0;
  Measurement z;
  int source_feature = -1;  // ground truth, -1 = false alarm
};

struct AgentRow {
  int step = 0;
  double true_x = 0.0, true_y = 0.0;
  double est_x = 0.0, est_y = 0.0;
  double est_vx = 0.0, est_vy = 0.0;
  int map_mode = 1;
  double mmse_mode = 1.0;
  std::vector<double> beliefs;
};

struct FeatureRow {
  int step = 0;
  int anchor_id = 0;
  int label = 0;
  double x = 0.0, y = 0.0;
  double amplitude = 0.0;
  double existence = 0.0;
};

namespace detail {

inline std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // no platform newline mangling
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

inline std::ifstream open_checked(const std::string& path, const char* schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line) || line != std::string("# ") + schema) {
    throw std::runtime_error(path + ": missing or mismatched schema header, expected " +
                             schema);
  }
  std::getline(in, line);  // column header
  return in;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace detail

inline void write_measurements_csv(const std::string& path,
                                   const std::vector<MeasurementRow>& rows) {
  auto out = detail::open_for_write(path);
  out << "# " << kMeasurementsSchema << "\n";
  out << "step,anchor_id,meas_index,range,aoa,amplitude,source_feature\n";
  for (const auto& r : rows) {
    out << r.step << ',' << r.anchor_id << ',' << r.meas_index << ','
        << format_double(r.z.range) << ',' << format_double(r.z.aoa) << ','
        << format_double(r.z.amplitude) << ',' << r.source_feature << "\n";
  }
}

inline std::vector<MeasurementRow> read_measurements_csv(const std::string& path) {
  auto in = detail::open_checked(path, kMeasurementsSchema);
  std::vector<MeasurementRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != 7) throw std::runtime_error(path + ": bad measurement row");
    MeasurementRow r;
    r.step = std::stoi(cells[0]);
    r.anchor_id = std::stoi(cells[1]);
    r.meas_index = std::stoi(cells[2]);
    r.z.range = std::stod(cells[3]);
    r.z.aoa = std::stod(cells[4]);
    r.z.amplitude = std::stod(cells[5]);
    r.source_feature = std::stoi(cells[6]);
    rows.push_back(r);
  }
  return rows;
}

inline void write_agent_csv(const std::string& path,
                            const std::vector<AgentRow>& rows) {
  auto out = detail::open_for_write(path);
  out << "# " << kAgentSchema << "\n";
  out << "step,true_x,true_y,est_x,est_y,est_vx,est_vy,map_mode,mmse_mode";
  const std::size_t q_count = rows.empty() ? 0 : rows.front().beliefs.size();
  for (std::size_t q = 1; q <= q_count; ++q) out << ",belief_" << q;
  out << "\n";
  for (const auto& r : rows) {
    out << r.step << ',' << format_double(r.true_x) << ',' << format_double(r.true_y)
        << ',' << format_double(r.est_x) << ',' << format_double(r.est_y) << ','
        << format_double(r.est_vx) << ',' << format_double(r.est_vy) << ','
        << r.map_mode << ',' << format_double(r.mmse_mode);
    for (double b : r.beliefs) out << ',' << format_double(b);
    out << "\n";
  }
}

inline std::vector<AgentRow> read_agent_csv(const std::string& path) {
  auto in = detail::open_checked(path, kAgentSchema);
  std::vector<AgentRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() < 10) throw std::runtime_error(path + ": bad agent row");
    AgentRow r;
    r.step = std::stoi(cells[0]);
    r.true_x = std::stod(cells[1]);
    r.true_y = std::stod(cells[2]);
    r.est_x = std::stod(cells[3]);
    r.est_y = std::stod(cells[4]);
    r.est_vx = std::stod(cells[5]);
    r.est_vy = std::stod(cells[6]);
    r.map_mode = std::stoi(cells[7]);
    r.mmse_mode = std::stod(cells[8]);
    for (std::size_t c = 9; c < cells.size(); ++c) {
      r.beliefs.push_back(std::stod(cells[c]));
    }
    rows.push_back(r);
  }
  return rows;
}

inline void write_features_csv(const std::string& path,
                               const std::vector<FeatureRow>& rows) {
  auto out = detail::open_for_write(path);
  out << "# " << kFeaturesSchema << "\n";
  out << "step,anchor_id,label,x,y,amplitude,existence\n";
  for (const auto& r : rows) {
    out << r.step << ',' << r.anchor_id << ',' << r.label << ','
        << format_double(r.x) << ',' << format_double(r.y) << ','
        << format_double(r.amplitude) << ',' << format_double(r.existence) << "\n";
  }
}

inline std::vector<FeatureRow> read_features_csv(const std::string& path) {
  auto in = detail::open_checked(path, kFeaturesSchema);
  std::vector<FeatureRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != 7) throw std::runtime_error(path + ": bad feature row");
    FeatureRow r;
    r.step = std::stoi(cells[0]);
    r.anchor_id = std::stoi(cells[1]);
    r.label = std::stoi(cells[2]);
    r.x = std::stod(cells[3]);
    r.y = std::stod(cells[4]);
    r.amplitude = std::stod(cells[5]);
    r.existence = std::stod(cells[6]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace mpslam
