#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "omnisat/bpe.hpp"
#include "omnisat/bspline.hpp"
#include "omnisat/core.hpp"
#include "omnisat/rvq.hpp"

namespace omnisat {

struct TokenizerConfig {
  int horizon = kDefaultHorizon;
  SplineConfig spline;
  RvqConfig rvq;
  int bpe_merges = 2048;  // merged ids added on top of the base alphabet
  bool per_embodiment_stats = false;

  /// Horizon 30, N = 8, degrees (3, 0), L = 8, K = (256, 256, 64), 2048 BPE merges.
  static TokenizerConfig omnisat8();
  /// Named preset: omnisat6, omnisat8, omnisat10 (differ only in depth).
  static TokenizerConfig preset(const std::string& name);

  void validate() const;
  bool operator==(const TokenizerConfig&) const = default;
};

struct GroupSlot {
  PartRole role = PartRole::position;
  int offset = 0;
  int size = 0;  // K_g

  bool operator==(const GroupSlot&) const = default;
};

struct TokenAddress {
  PartRole role = PartRole::position;
  int layer = 1;  // 1-based
  int index = 0;

  bool operator==(const TokenAddress&) const = default;
};

/// Global alphabet: id = offset(g) + (layer - 1) * K_g + index, groups in
/// position, rotation, gripper order.
class TokenLayout {
 public:
  TokenLayout() = default;
  TokenLayout(int layers, std::vector<GroupSlot> groups);

  static TokenLayout build(int layers, std::span<const PartRole> present, const RvqConfig& cfg);

  int token_id(PartRole role, int layer, int index) const;
  TokenAddress address(int id) const;

  int layers() const { return layers_; }
  int base_vocab() const { return base_vocab_; }
  const std::vector<GroupSlot>& groups() const { return groups_; }
  const GroupSlot& slot(PartRole role) const;

  bool operator==(const TokenLayout&) const = default;

 private:
  int layers_ = 0;
  int base_vocab_ = 0;
  std::vector<GroupSlot> groups_;
};

struct TrainingMetadata {
  std::uint64_t seed = 0;
  int epochs = 0;
  std::string corpus_fingerprint;
  std::size_t trajectories = 0;
  std::size_t chunks = 0;
  std::size_t dropped_steps = 0;
  std::vector<LossReport> epoch_losses;
};

struct TokenizerArtifact {
  static constexpr const char* kVersion = "omnisat-artifact/1";

  TokenizerConfig config;
  std::vector<ChannelMeta> channels;
  NormStats norm;
  std::map<std::string, NormStats> embodiment_norm;
  CodebookSet codebooks;
  TokenLayout layout;
  MergeTable merges;
  TrainingMetadata metadata;

  std::vector<PartRole> roles() const { return roles_of(channels); }
  /// Per-embodiment statistics when fitted and known, the corpus statistics otherwise.
  const NormStats& stats_for(const std::string& embodiment) const;
};

/// Stable hex fingerprint over ids, metadata and values.
std::string corpus_fingerprint(std::span<const Trajectory> corpus);

/// Normalize, chunk, ridge-fit, train codebooks, encode and learn BPE merges.
/// Errors carry the failing stage name.
TokenizerArtifact fit(std::span<const Trajectory> corpus, const TokenizerConfig& config,
                      std::uint64_t seed);

struct TokenizedChunk {
  std::size_t start = 0;
  std::size_t length = 0;
  TokenStream ids;  // post-BPE
  std::size_t pre_bpe = 0;

  bool operator==(const TokenizedChunk&) const = default;
};

struct TokenizedTrajectory {
  std::string traj_id;
  std::string embodiment;
  std::size_t dropped_steps = 0;
  std::vector<TokenizedChunk> chunks;

  bool operator==(const TokenizedTrajectory&) const = default;
};

/// Pre-BPE global ids for one normalized chunk (all layers active).
TokenStream encode_normalized_chunk(const TokenizerArtifact& artifact, const Matrix& chunk);

/// Normalized steps x d reconstruction from post-BPE ids. `layers` < 0 uses all layers.
Matrix decode_normalized_chunk(const TokenizerArtifact& artifact, std::span<const int> ids,
                               int steps, int layers = -1);

TokenizedTrajectory tokenize(const TokenizerArtifact& artifact, const Trajectory& traj);

/// Values in original units, chunks concatenated in order.
Matrix detokenize(const TokenizerArtifact& artifact, const TokenizedTrajectory& tokens,
                  int layers = -1);

/// Convenience inverse producing a trajectory record with the artifact's channels.
Trajectory detokenize_trajectory(const TokenizerArtifact& artifact,
                                 const TokenizedTrajectory& tokens);

enum class StreamRole : char { visual = 'V', action = 'A' };

struct PackedStream {
  std::vector<int> stream;
  std::string mask;  // one 'V' or 'A' per stream position
};

/// Per frame, visual ids then action ids.
PackedStream pack_stream(std::span<const std::vector<int>> visual,
                         std::span<const std::vector<int>> action);

/// Places each chunk's ids at the frame where the chunk starts; other frames
/// carry no action ids.
std::vector<std::vector<int>> actions_per_frame(const TokenizedTrajectory& tokens,
                                                std::size_t frames);

}  // namespace omnisat
