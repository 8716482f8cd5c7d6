#include "omnisat/corpus_io.hpp"

#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace omnisat {

using nlohmann::json;

json trajectory_to_json(const Trajectory& traj) {
  json channels = json::array();
  for (const auto& c : traj.channels) {
    channels.push_back({{"name", c.name}, {"role", std::string(to_string(c.role))}});
  }
  json rows = json::array();
  for (Eigen::Index t = 0; t < traj.values.rows(); ++t) {
    json row = json::array();
    for (Eigen::Index c = 0; c < traj.values.cols(); ++c) row.push_back(traj.values(t, c));
    rows.push_back(std::move(row));
  }
  return {{"id", traj.id},
          {"embodiment", traj.embodiment},
          {"rate_hz", traj.rate_hz},
          {"channels", std::move(channels)},
          {"values", std::move(rows)}};
}

Trajectory trajectory_from_json(const json& record) {
  Trajectory traj;
  try {
    traj.id = record.at("id").get<std::string>();
    traj.embodiment = record.value("embodiment", std::string{});
    traj.rate_hz = record.value("rate_hz", 30.0);
    for (const auto& c : record.at("channels")) {
      traj.channels.push_back(
          {c.at("name").get<std::string>(), part_role_from_string(c.at("role").get<std::string>())});
    }
    const auto& rows = record.at("values");
    const auto d = static_cast<Eigen::Index>(traj.channels.size());
    traj.values.resize(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t t = 0; t < rows.size(); ++t) {
      const auto& row = rows[t];
      if (static_cast<Eigen::Index>(row.size()) != d) {
        throw Error("row " + std::to_string(t) + " has " + std::to_string(row.size()) +
                    " values, expected " + std::to_string(d));
      }
      for (Eigen::Index c = 0; c < d; ++c) {
        // JSON has no NaN/Inf; null marks a missing sample.
        traj.values(static_cast<Eigen::Index>(t), c) =
            row[c].is_null() ? std::numeric_limits<double>::quiet_NaN() : row[c].get<double>();
      }
    }
  } catch (const json::exception& e) {
    throw Error("malformed trajectory record '" + traj.id + "': " + e.what());
  }
  traj.validate();
  return traj;
}

std::vector<Trajectory> read_corpus(std::istream& in) {
  std::vector<Trajectory> corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    corpus.push_back(trajectory_from_json(record));
  }
  return corpus;
}

std::vector<Trajectory> read_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file " + path);
  return read_corpus(in);
}

void write_corpus(std::ostream& out, const std::vector<Trajectory>& corpus) {
  for (const auto& traj : corpus) out << trajectory_to_json(traj).dump() << '\n';
}

void write_corpus_file(const std::string& path, const std::vector<Trajectory>& corpus) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus file " + path);
  write_corpus(out, corpus);
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    const auto b = item.find_first_not_of(" \t\r");
    const auto e = item.find_last_not_of(" \t\r");
    parts.push_back(b == std::string::npos ? std::string{} : item.substr(b, e - b + 1));
  }
  return parts;
}

bool glob_match(const std::string& pattern, const std::string& name) {
  if (!pattern.empty() && pattern.back() == '*') {
    return name.compare(0, pattern.size() - 1, pattern, 0, pattern.size() - 1) == 0;
  }
  return pattern == name;
}

std::vector<PartRole> resolve_roles(const std::vector<std::string>& names,
                                    const std::string& spec) {
  const auto items = split(spec, ',');
  std::vector<PartRole> roles;
  if (spec.find('=') == std::string::npos) {
    if (items.size() != names.size()) {
      throw Error("role list has " + std::to_string(items.size()) + " entries for " +
                  std::to_string(names.size()) + " CSV columns");
    }
    for (const auto& r : items) roles.push_back(part_role_from_string(r));
    return roles;
  }
  for (const auto& name : names) {
    bool found = false;
    for (const auto& item : items) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw Error("role pattern '" + item + "' lacks '='");
      if (glob_match(item.substr(0, eq), name)) {
        roles.push_back(part_role_from_string(item.substr(eq + 1)));
        found = true;
        break;
      }
    }
    if (!found) throw Error("no role pattern matches CSV column '" + name + "'");
  }
  return roles;
}

}  // namespace

Trajectory read_csv_trajectory(const std::string& path, const std::string& roles,
                               double rate_hz, const std::string& embodiment) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open CSV file " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("CSV file " + path + " is empty");
  const auto names = split(line, ',');
  const auto resolved = resolve_roles(names, roles);

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line, ',');
    if (cells.size() != names.size()) {
      throw Error("CSV " + path + " row " + std::to_string(rows.size() + 1) + " has " +
                  std::to_string(cells.size()) + " cells");
    }
    std::vector<double> row;
    for (const auto& cell : cells) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error("CSV " + path + ": cannot parse '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }

  Trajectory traj;
  traj.id = std::filesystem::path(path).stem().string();
  traj.embodiment = embodiment;
  traj.rate_hz = rate_hz;
  for (std::size_t c = 0; c < names.size(); ++c) traj.channels.push_back({names[c], resolved[c]});
  traj.values.resize(static_cast<Eigen::Index>(rows.size()),
                     static_cast<Eigen::Index>(names.size()));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t c = 0; c < names.size(); ++c) {
      traj.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = rows[t][c];
    }
  }
  traj.validate();
  return traj;
}

}  // namespace omnisat
