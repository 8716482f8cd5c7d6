#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "omnisat/core.hpp"

namespace omnisat {

nlohmann::json trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const nlohmann::json& record);

/// One trajectory per line. Every record is validated.
std::vector<Trajectory> read_corpus(std::istream& in);
std::vector<Trajectory> read_corpus_file(const std::string& path);
void write_corpus(std::ostream& out, const std::vector<Trajectory>& corpus);
void write_corpus_file(const std::string& path, const std::vector<Trajectory>& corpus);

/// CSV with a header row of channel names. `roles` is either one role per
/// column ("position,position,gripper") or per-channel patterns
/// ("x=position,roll=rotation,*=gripper") matched against header names, where
/// a trailing '*' matches any suffix.
Trajectory read_csv_trajectory(const std::string& path, const std::string& roles,
                               double rate_hz = 30.0, const std::string& embodiment = "");

}  // namespace omnisat
