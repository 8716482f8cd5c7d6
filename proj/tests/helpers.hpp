#pragma once

#include <random>
#include <string>
#include <vector>

#include "omnisat/core.hpp"

namespace testing {

using omnisat::Matrix;
using omnisat::PartRole;
using omnisat::Trajectory;
using omnisat::Vector;

inline Trajectory make_traj(const std::string& id, Matrix values, std::vector<PartRole> roles) {
  Trajectory t;
  t.id = id;
  t.embodiment = "arm";
  for (std::size_t c = 0; c < roles.size(); ++c) {
    t.channels.push_back({"ch" + std::to_string(c), roles[c]});
  }
  t.values = std::move(values);
  return t;
}

inline std::vector<PartRole> arm_roles() {
  return {PartRole::position, PartRole::position, PartRole::position, PartRole::rotation,
          PartRole::rotation, PartRole::rotation, PartRole::gripper};
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                            double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = d(rng);
  }
  return m;
}

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double lo = -1.0, double hi = 1.0) {
  return random_matrix(rng, n, 1, lo, hi).col(0);
}

inline int random_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace testing
