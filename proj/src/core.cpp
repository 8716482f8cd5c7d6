#include "omnisat/core.hpp"

#include <algorithm>
#include <cmath>

namespace omnisat {

std::string_view to_string(PartRole role) {
  switch (role) {
    case PartRole::position:
      return "position";
    case PartRole::rotation:
      return "rotation";
    case PartRole::gripper:
      return "gripper";
  }
  return "unknown";
}

PartRole part_role_from_string(std::string_view name) {
  if (name == "position" || name == "pos") return PartRole::position;
  if (name == "rotation" || name == "rot") return PartRole::rotation;
  if (name == "gripper" || name == "grip") return PartRole::gripper;
  throw Error("unknown part role '" + std::string(name) + "'");
}

void Trajectory::validate(std::size_t min_steps) const {
  if (static_cast<std::size_t>(values.rows()) < min_steps) {
    throw Error("trajectory '" + id + "' has " + std::to_string(values.rows()) +
                " steps, need at least " + std::to_string(min_steps));
  }
  if (values.cols() < 1) throw Error("trajectory '" + id + "' has no channels");
  if (channels.size() != dof()) {
    throw Error("trajectory '" + id + "' declares " + std::to_string(channels.size()) +
                " channels but values have " + std::to_string(values.cols()) + " columns");
  }
  if (!(rate_hz > 0.0)) throw Error("trajectory '" + id + "' has non-positive rate_hz");
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    for (Eigen::Index t = 0; t < values.rows(); ++t) {
      if (!std::isfinite(values(t, c))) {
        throw Error("trajectory '" + id + "' channel '" + channels[c].name +
                    "' has a non-finite value at step " + std::to_string(t));
      }
    }
  }
}

std::vector<PartRole> roles_of(std::span<const ChannelMeta> channels) {
  std::vector<PartRole> roles;
  roles.reserve(channels.size());
  for (const auto& c : channels) roles.push_back(c.role);
  return roles;
}

double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error("percentile of an empty sample");
  if (q < 0.0 || q > 1.0) throw Error("percentile rank outside [0, 1]");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

NormStats fit_norm_stats(std::span<const Trajectory> corpus, std::size_t channel_count) {
  if (corpus.empty()) throw Error("fit_norm_stats: empty corpus");
  std::size_t total_steps = 0;
  for (const auto& traj : corpus) {
    if (traj.dof() != channel_count) {
      throw Error("fit_norm_stats: trajectory '" + traj.id + "' has " +
                  std::to_string(traj.dof()) + " channels, expected " +
                  std::to_string(channel_count));
    }
    for (Eigen::Index c = 0; c < traj.values.cols(); ++c) {
      for (Eigen::Index t = 0; t < traj.values.rows(); ++t) {
        if (!std::isfinite(traj.values(t, c))) {
          const std::string name =
              c < static_cast<Eigen::Index>(traj.channels.size()) ? traj.channels[c].name
                                                                  : std::to_string(c);
          throw Error("fit_norm_stats: non-finite value in trajectory '" + traj.id +
                      "' channel '" + name + "'");
        }
      }
    }
    total_steps += traj.steps();
  }

  NormStats stats;
  stats.p1.resize(channel_count);
  stats.p99.resize(channel_count);
  stats.degenerate.resize(channel_count);
  std::vector<double> pooled;
  pooled.reserve(total_steps);
  for (std::size_t c = 0; c < channel_count; ++c) {
    pooled.clear();
    for (const auto& traj : corpus) {
      const auto col = traj.values.col(static_cast<Eigen::Index>(c));
      pooled.insert(pooled.end(), col.data(), col.data() + col.size());
    }
    std::sort(pooled.begin(), pooled.end());
    stats.p1[c] = percentile_sorted(pooled, 0.01);
    stats.p99[c] = percentile_sorted(pooled, 0.99);
    stats.degenerate[c] = (stats.p99[c] - stats.p1[c]) < kDegenerateRange;
  }
  return stats;
}

namespace {

void check_width(const Matrix& m, const NormStats& stats, const char* what) {
  if (static_cast<std::size_t>(m.cols()) != stats.channels()) {
    throw Error(std::string(what) + ": matrix has " + std::to_string(m.cols()) +
                " channels but stats cover " + std::to_string(stats.channels()));
  }
}

}  // namespace

Matrix normalize(const Matrix& values, const NormStats& stats) {
  check_width(values, stats, "normalize");
  Matrix out(values.rows(), values.cols());
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    if (stats.degenerate[c]) {
      out.col(c).setZero();
      continue;
    }
    const double lo = stats.p1[c];
    const double range = stats.p99[c] - lo;
    for (Eigen::Index t = 0; t < values.rows(); ++t) {
      out(t, c) = 2.0 * (values(t, c) - lo) / range - 1.0;
    }
  }
  return out;
}

Matrix denormalize(const Matrix& normalized, const NormStats& stats) {
  check_width(normalized, stats, "denormalize");
  Matrix out(normalized.rows(), normalized.cols());
  for (Eigen::Index c = 0; c < normalized.cols(); ++c) {
    const double lo = stats.p1[c];
    if (stats.degenerate[c]) {
      out.col(c).setConstant(lo);
      continue;
    }
    const double range = stats.p99[c] - lo;
    for (Eigen::Index t = 0; t < normalized.rows(); ++t) {
      out(t, c) = (normalized(t, c) + 1.0) * range / 2.0 + lo;
    }
  }
  return out;
}

double out_of_range_fraction(const Matrix& normalized) {
  if (normalized.size() == 0) return 0.0;
  const auto outside = (normalized.array().abs() > 1.0).count();
  return static_cast<double>(outside) / static_cast<double>(normalized.size());
}

ChunkPlan plan_chunks(std::size_t steps, int horizon) {
  if (horizon < 2) throw Error("chunk horizon must be at least 2");
  const auto h = static_cast<std::size_t>(horizon);
  ChunkPlan plan;
  std::size_t start = 0;
  while (start + h <= steps) {
    plan.spans.push_back({start, h});
    start += h;
  }
  const std::size_t rest = steps - start;
  if (rest >= 2) {
    plan.spans.push_back({start, rest});
  } else {
    plan.dropped_steps = rest;
  }
  return plan;
}

ChunkResult chunk(const Matrix& values, std::string_view traj_id, int horizon) {
  const ChunkPlan plan = plan_chunks(static_cast<std::size_t>(values.rows()), horizon);
  ChunkResult result;
  result.dropped_steps = plan.dropped_steps;
  result.chunks.reserve(plan.spans.size());
  for (const auto& span : plan.spans) {
    result.chunks.push_back({values.middleRows(static_cast<Eigen::Index>(span.start),
                                               static_cast<Eigen::Index>(span.length)),
                             std::string(traj_id), span.start});
  }
  return result;
}

}  // namespace omnisat
