#pragma once
// Trajectory CSV: header `step,time,dist_E,risk,aug_risk,reg_loss,param_norm`,
// one row per recorded step, %.12e floats, optional `status=diverged` footer.

#include "eqreg/dynamics.hpp"

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace eqreg {

inline constexpr const char* kTrajectoryHeader = "step,time,dist_E,risk,aug_risk,reg_loss,param_norm";

inline std::string format_e12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12e", v);
  return buf;
}

inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  os << kTrajectoryHeader << '\n';
  for (const auto& r : tr.records) {
    os << r.step << ',' << format_e12(r.time) << ',' << format_e12(r.dist_E) << ',' << format_e12(r.risk) << ','
       << format_e12(r.aug_risk) << ',' << format_e12(r.reg_loss) << ',' << format_e12(r.param_norm) << '\n';
  }
  if (tr.status == RunStatus::diverged) os << "status=diverged\n";
}

struct ParsedTrajectory {
  std::vector<TrajectoryRecord> records;
  RunStatus status = RunStatus::ok;
};

inline ParsedTrajectory read_trajectory_csv(std::istream& is) {
  ParsedTrajectory out;
  std::string line;
  if (!std::getline(is, line) || line != kTrajectoryHeader) throw std::runtime_error("trajectory csv: bad header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line == "status=diverged") {
      out.status = RunStatus::diverged;
      continue;
    }
    std::istringstream ls(line);
    std::string f[7];
    for (int k = 0; k < 7; ++k)
      if (!std::getline(ls, f[k], ',')) throw std::runtime_error("trajectory csv: short row '" + line + "'");
    TrajectoryRecord r;
    r.step = std::stoull(f[0]);
    r.time = std::strtod(f[1].c_str(), nullptr);
    r.dist_E = std::strtod(f[2].c_str(), nullptr);
    r.risk = std::strtod(f[3].c_str(), nullptr);
    r.aug_risk = std::strtod(f[4].c_str(), nullptr);
    r.reg_loss = std::strtod(f[5].c_str(), nullptr);
    r.param_norm = std::strtod(f[6].c_str(), nullptr);
    out.records.push_back(r);
  }
  return out;
}

}  // namespace eqreg
