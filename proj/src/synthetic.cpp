#include "omnisat/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "omnisat/random.hpp"

namespace omnisat {

namespace {

struct Wave {
  double amplitude = 0.0;
  double freq_hz = 0.0;
  double phase = 0.0;
};

struct Motif {
  std::vector<double> offset;            // per continuous channel
  std::vector<std::vector<Wave>> waves;  // per continuous channel
  int grip_start = 0;
  int toggle_at = -1;
};

constexpr int kContinuous = 6;

Motif draw_motif(const SyntheticConfig& cfg, Rng& rng) {
  Motif m;
  for (int c = 0; c < kContinuous; ++c) {
    const bool rot = c >= 3;
    const double amp_max = rot ? 0.5 : 0.3;
    m.offset.push_back((uniform01(rng) * 2.0 - 1.0) * (rot ? 0.3 : 0.2));
    std::vector<Wave> waves;
    for (int k = 0; k < cfg.components; ++k) {
      waves.push_back({amp_max * (0.2 + 0.8 * uniform01(rng)) / cfg.components,
                       cfg.min_freq_hz + (cfg.max_freq_hz - cfg.min_freq_hz) * uniform01(rng),
                       2.0 * std::numbers::pi * uniform01(rng)});
    }
    m.waves.push_back(std::move(waves));
  }
  m.grip_start = uniform01(rng) < 0.5 ? 0 : 1;
  if (uniform01(rng) < cfg.toggle_prob) {
    m.toggle_at = 1 + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(cfg.steps - 1)));
  }
  return m;
}

Matrix render(const SyntheticConfig& cfg, const Motif& m, Rng& rng) {
  Matrix v(cfg.steps, kContinuous + 1);
  for (int t = 0; t < cfg.steps; ++t) {
    const double time = t / cfg.rate_hz;
    for (int c = 0; c < kContinuous; ++c) {
      double x = m.offset[c];
      for (const auto& w : m.waves[c]) {
        x += w.amplitude * std::sin(2.0 * std::numbers::pi * w.freq_hz * time + w.phase);
      }
      v(t, c) = x + cfg.noise * normal01(rng);
    }
    const bool toggled = m.toggle_at >= 0 && t >= m.toggle_at;
    v(t, kContinuous) = toggled ? 1 - m.grip_start : m.grip_start;
  }
  return v;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (steps < 2) throw Error("synthetic: steps must be >= 2");
  if (!(rate_hz > 0.0)) throw Error("synthetic: rate_hz must be positive");
  if (components < 1) throw Error("synthetic: components must be >= 1");
  if (!(min_freq_hz >= 0.0) || max_freq_hz < min_freq_hz) throw Error("synthetic: bad frequency range");
  if (!(noise >= 0.0)) throw Error("synthetic: noise must be >= 0");
  if (!(toggle_prob >= 0.0 && toggle_prob <= 1.0)) throw Error("synthetic: toggle_prob outside [0, 1]");
  if (motifs < 0) throw Error("synthetic: motifs must be >= 0");
}

SyntheticConfig synthetic_preset(const std::string& name, std::size_t trajectories) {
  SyntheticConfig cfg;
  cfg.trajectories = trajectories;
  if (name == "sinusoid") return cfg;
  if (name == "sinusoid-motif") {
    cfg.motifs = 16;
    cfg.noise = 1e-4;
    return cfg;
  }
  throw Error("unknown synthetic preset '" + name + "' (sinusoid, sinusoid-motif)");
}

std::vector<ChannelMeta> synthetic_channels() {
  return {{"x", PartRole::position},    {"y", PartRole::position},
          {"z", PartRole::position},    {"roll", PartRole::rotation},
          {"pitch", PartRole::rotation}, {"yaw", PartRole::rotation},
          {"gripper", PartRole::gripper}};
}

std::vector<Trajectory> generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<Motif> pool;
  if (cfg.motifs > 0) {
    Rng rng(derive_seed(seed, {1}));
    for (int k = 0; k < cfg.motifs; ++k) pool.push_back(draw_motif(cfg, rng));
  }
  const auto channels = synthetic_channels();
  std::vector<Trajectory> out;
  out.reserve(cfg.trajectories);
  for (std::size_t i = 0; i < cfg.trajectories; ++i) {
    Rng rng(derive_seed(seed, {2, i}));
    Trajectory traj;
    traj.id = "syn-" + std::to_string(i);
    traj.embodiment = cfg.embodiment;
    traj.rate_hz = cfg.rate_hz;
    traj.channels = channels;
    if (pool.empty()) {
      traj.values = render(cfg, draw_motif(cfg, rng), rng);
    } else {
      const auto& m = pool[uniform_below(rng, pool.size())];
      traj.values = render(cfg, m, rng);
    }
    out.push_back(std::move(traj));
  }
  return out;
}

}  // namespace omnisat
