#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsteer/dynamics.hpp"

namespace bsteer {

// Trajectory records: one JSON object per line. Writers emit
//   {"seq": str, "t": int, "state": [...], "control": [...],
//    "barriers": [...], "B": number, "fallback": bool}
// ("control"/"barriers"/"B"/"fallback" are absent where undefined, e.g. the
// initial state has no control). Readers only require "t" and "state".

struct TrajectoryRecord {
  std::string seq;
  int t = 0;
  Vec state;
};

inline void write_trajectory(std::ostream& out, const LatentTrajectory& traj,
                             const std::string& seq) {
  auto vec_to_json = [](const Vec& v) {
    auto arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
  };
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    nlohmann::json obj;
    obj["seq"] = seq;
    obj["t"] = t;
    obj["state"] = vec_to_json(traj.states[t]);
    if (t > 0) {
      obj["control"] = vec_to_json(traj.controls[t - 1]);
      obj["fallback"] = traj.fallback_steps[t - 1] != 0;
    }
    obj["barriers"] = vec_to_json(Vec(traj.barrier_trace.row(static_cast<Eigen::Index>(t))));
    obj["B"] = traj.composed_trace[static_cast<Eigen::Index>(t)];
    out << obj.dump() << "\n";
  }
}

inline void write_trajectories(const std::string& path,
                               const std::vector<std::pair<std::string, LatentTrajectory>>& trajs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& [seq, traj] : trajs) write_trajectory(out, traj, seq);
  if (!out) throw IoError("write to '" + path + "' failed");
}

// Reads state sequences grouped by "seq" (default group "" when absent),
// ordered by "t" within each group (file order breaks ties).
inline std::vector<std::pair<std::string, std::vector<Vec>>> read_trajectory_states(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<TrajectoryRecord> records;
  std::string line;
  std::size_t lineno = 0;
  Eigen::Index dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object())
      throw FormatError(path + ":" + std::to_string(lineno) + ": not a JSON object");
    try {
      TrajectoryRecord rec;
      rec.seq = obj.value("seq", "");
      rec.t = obj.at("t").get<int>();
      auto vec = obj.at("state").get<std::vector<double>>();
      if (dim == 0) dim = static_cast<Eigen::Index>(vec.size());
      if (static_cast<Eigen::Index>(vec.size()) != dim)
        throw FormatError(path + ":" + std::to_string(lineno) + ": inconsistent state length");
      rec.state = Eigen::Map<Vec>(vec.data(), static_cast<Eigen::Index>(vec.size()));
      if (!rec.state.allFinite())
        throw FormatError(path + ":" + std::to_string(lineno) + ": non-finite state");
      records.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (records.empty()) throw FormatError(path + ": no trajectory records");

  std::vector<std::pair<std::string, std::vector<Vec>>> groups;
  auto find_group = [&](const std::string& seq) -> std::vector<Vec>& {
    for (auto& [name, states] : groups)
      if (name == seq) return states;
    groups.emplace_back(seq, std::vector<Vec>{});
    return groups.back().second;
  };
  // Records are expected in time order per sequence; verify rather than sort
  // so silent reordering in inputs is caught.
  for (auto& rec : records) {
    auto& states = find_group(rec.seq);
    int expected = static_cast<int>(states.size());
    if (rec.t != expected)
      throw FormatError(path + ": sequence '" + rec.seq + "' has t=" + std::to_string(rec.t) +
                        " where " + std::to_string(expected) + " was expected");
    states.push_back(std::move(rec.state));
  }
  return groups;
}

}  // namespace bsteer
