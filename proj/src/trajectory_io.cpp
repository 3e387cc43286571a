#include "hyperlb/trajectory_io.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace hyperlb {

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 12);
  return std::string(buf, res.ptr);
}

void write_trajectory_csv(std::ostream& out, const std::vector<double>& grid, const std::vector<FluidState>& states) {
  if (grid.size() != states.size()) throw std::invalid_argument("grid and states differ in length");
  out << "t,i,j,y\n";
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Triangle& y = states[k].data();
    for (int j = 0; j <= y.jmax(); ++j) {
      for (int i = 0; i <= j; ++i) {
        if (y(i, j) == 0.0) continue;
        out << format_number(grid[k]) << ',' << i << ',' << j << ',' << format_number(y(i, j)) << '\n';
      }
    }
  }
}

void write_trajectory_csv(std::ostream& out, const std::vector<Snapshot>& snapshots) {
  out << "t,i,j,y\n";
  for (const auto& snap : snapshots) {
    for (const auto& [key, value] : snap.y) {
      if (value == 0.0) continue;
      out << format_number(snap.t) << ',' << key.first << ',' << key.second << ',' << format_number(value) << '\n';
    }
  }
}

FluidState read_state_csv(std::istream& in, int jmax) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty trajectory file");
  if (line.rfind("t,i,j,y", 0) != 0) throw std::invalid_argument("trajectory file must start with header t,i,j,y");
  double first_t = std::numeric_limits<double>::infinity();
  std::map<std::pair<int, int>, double> entries;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field[4];
    for (auto& f : field) {
      if (!std::getline(row, f, ',')) throw std::invalid_argument("malformed row at line " + std::to_string(line_no));
    }
    const double t = std::stod(field[0]);
    const int i = std::stoi(field[1]);
    const int j = std::stoi(field[2]);
    const double y = std::stod(field[3]);
    if (t < first_t) {
      first_t = t;
      entries.clear();
    }
    if (t == first_t) entries[{i, j}] += y;
  }
  if (entries.empty()) throw std::invalid_argument("trajectory file has no rows");
  Triangle state(jmax);
  for (const auto& [key, y] : entries) {
    if (key.first < 0 || key.first > key.second || key.second > jmax) {
      throw std::invalid_argument("entry outside 0 <= i <= j <= jmax");
    }
    state(key.first, key.second) = y;
  }
  return FluidState(std::move(state));
}

nlohmann::json to_json(const MetricsRecord& record, bool with_trajectory) {
  nlohmann::json out = {
      {"mean_wait", record.mean_wait},
      {"msgs_per_job", record.msgs_per_job},
      {"mean_queue_per_server", record.mean_queue_per_server},
      {"positive_wait_fraction", record.positive_wait_fraction},
      {"arrivals", record.arrivals},
      {"started", record.started},
      {"messages", record.messages},
      {"queue_len_hist", record.queue_len_hist},
  };
  if (with_trajectory) {
    nlohmann::json traj = nlohmann::json::array();
    for (const auto& snap : record.trajectory) {
      nlohmann::json entries = nlohmann::json::array();
      for (const auto& [key, value] : snap.y) entries.push_back({key.first, key.second, value});
      traj.push_back({{"t", snap.t}, {"y", entries}});
    }
    out["trajectory"] = traj;
  }
  return out;
}

nlohmann::json to_json(const ReplicationResult& result) {
  return {
      {"runs", result.runs.size()},
      {"mean", to_json(result.mean)},
      {"wait_ci_halfwidth", result.wait_ci_halfwidth},
      {"queue_ci_halfwidth", result.queue_ci_halfwidth},
      {"msgs_ci_halfwidth", result.msgs_ci_halfwidth},
  };
}

}  // namespace hyperlb
