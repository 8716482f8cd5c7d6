#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "omnisat/core.hpp"

namespace omnisat {

/// Seven-channel arm: x, y, z (m), roll, pitch, yaw (rad), gripper (0 closed, 1 open).
struct SyntheticConfig {
  std::size_t trajectories = 1000;
  int steps = kDefaultHorizon;
  double rate_hz = 30.0;
  int components = 2;          // sinusoids per channel
  double min_freq_hz = 0.1;
  double max_freq_hz = 1.0;
  double noise = 1e-3;         // additive Gaussian sigma, original units
  double toggle_prob = 0.1;    // per trajectory, chance of one gripper switch
  int motifs = 0;              // > 0 draws each trajectory from a fixed pool of motifs
  std::string embodiment = "synthetic-arm";

  void validate() const;
};

/// "sinusoid": independent random mixtures. "sinusoid-motif": 16 motifs, low noise.
SyntheticConfig synthetic_preset(const std::string& name, std::size_t trajectories);

std::vector<ChannelMeta> synthetic_channels();

std::vector<Trajectory> generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed);

}  // namespace omnisat
