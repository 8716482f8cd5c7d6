#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace omnisat {

/// Raised for invalid inputs and pipeline stage failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class PartRole : int { position = 0, rotation = 1, gripper = 2 };

inline constexpr int kPartRoleCount = 3;

std::string_view to_string(PartRole role);
PartRole part_role_from_string(std::string_view name);

struct ChannelMeta {
  std::string name;
  PartRole role = PartRole::position;

  bool operator==(const ChannelMeta&) const = default;
};

/// A T x d block of actions in original units plus per-channel metadata.
struct Trajectory {
  std::string id;
  std::string embodiment;
  double rate_hz = 30.0;
  std::vector<ChannelMeta> channels;
  Matrix values;  // rows = timesteps, cols = channels

  std::size_t steps() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t dof() const { return static_cast<std::size_t>(values.cols()); }

  /// Throws unless T >= min_steps, d >= 1, channel metadata matches d and all values are finite.
  void validate(std::size_t min_steps = 2) const;
};

std::vector<PartRole> roles_of(std::span<const ChannelMeta> channels);

// Ranges narrower than this (original units) are treated as constant channels.
inline constexpr double kDegenerateRange = 1e-8;

struct NormStats {
  std::vector<double> p1;
  std::vector<double> p99;
  std::vector<bool> degenerate;

  std::size_t channels() const { return p1.size(); }
};

/// Linear-interpolation percentile of an ascending-sorted sample, q in [0, 1].
double percentile_sorted(std::span<const double> sorted, double q);

/// Pooled per-channel 1st/99th percentiles over every timestep of the corpus.
NormStats fit_norm_stats(std::span<const Trajectory> corpus, std::size_t channel_count);

/// Maps p1 -> -1 and p99 -> +1 per channel without clipping; degenerate channels map to 0.
Matrix normalize(const Matrix& values, const NormStats& stats);
Matrix denormalize(const Matrix& normalized, const NormStats& stats);

/// Fraction of entries outside [-1, 1].
double out_of_range_fraction(const Matrix& normalized);

struct Chunk {
  Matrix values;  // normalized units
  std::string traj_id;
  std::size_t start = 0;

  std::size_t length() const { return static_cast<std::size_t>(values.rows()); }
};

struct ChunkSpan {
  std::size_t start = 0;
  std::size_t length = 0;

  bool operator==(const ChunkSpan&) const = default;
};

struct ChunkPlan {
  std::vector<ChunkSpan> spans;
  std::size_t dropped_steps = 0;
};

inline constexpr int kDefaultHorizon = 30;

/// Non-overlapping windows of `horizon` steps; a trailing remainder of one step is dropped.
ChunkPlan plan_chunks(std::size_t steps, int horizon);

struct ChunkResult {
  std::vector<Chunk> chunks;
  std::size_t dropped_steps = 0;
};

ChunkResult chunk(const Matrix& values, std::string_view traj_id, int horizon);

}  // namespace omnisat
