#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "omnisat/bspline.hpp"
#include "omnisat/core.hpp"

namespace omnisat {

/// Index emitted for a layer that was dropped during training.
inline constexpr int kSkippedLayer = -1;

/// With a null slot, codeword 0 of every layer is pinned to the zero vector so a
/// layer can never increase the residual norm. The slot is excluded from EMA
/// updates and reseeding.
inline constexpr int kNullCodeword = 0;

struct RvqConfig {
  int layers = 8;
  std::array<int, kPartRoleCount> codebook_size{256, 256, 64};  // indexed by PartRole
  double decay = 0.99;
  double drop_p = 0.1;
  double gamma = 1.0;
  double lambda1 = 1.0;
  double lambda2 = 0.2;
  double reseed_threshold = 1e-2;
  int epochs = 5;
  int batch_size = 256;
  bool null_codeword = true;

  int size_for(PartRole role) const { return codebook_size[static_cast<int>(role)]; }
  void validate() const;

  bool operator==(const RvqConfig&) const = default;
};

/// Residual codebooks for one part group: per layer a K x N codeword table
/// plus its EMA statistics. EMA state starts at zero; a codeword keeps its
/// seeded value until it is first assigned, then equals sums / counts.
struct Codebook {
  PartRole group = PartRole::position;
  double decay = 0.99;
  bool null_slot = true;
  std::vector<Matrix> codewords;   // per layer, K x N
  std::vector<Vector> ema_counts;  // per layer, K
  std::vector<Matrix> ema_sums;    // per layer, K x N

  int layers() const { return static_cast<int>(codewords.size()); }
  int size() const { return codewords.empty() ? 0 : static_cast<int>(codewords[0].rows()); }
  int dim() const { return codewords.empty() ? 0 : static_cast<int>(codewords[0].cols()); }

  bool pinned(int index) const { return null_slot && index == kNullCodeword; }

  /// All codewords and EMA state zero.
  static Codebook zeros(PartRole group, int layers, int size, int dim, double decay,
                        bool null_slot = true);

  /// Overwrites one codeword and clears its EMA state.
  void set_codeword(int layer, int index, const Vector& value);
};

struct Nearest {
  int index = 0;
  double distance2 = 0.0;
};

/// Squared-Euclidean argmin over the rows of `table`; lowest index wins ties.
Nearest nearest_codeword(const Matrix& table, const Vector& r);

struct ChannelEncoding {
  std::vector<int> indices;     // L entries, kSkippedLayer where masked out
  std::vector<Vector> residual;  // L + 1 entries; residual[0] is the input
};

/// Greedy residual quantization. An empty mask enables every layer.
ChannelEncoding encode_channel(const Codebook& book, const Vector& s,
                               std::span<const bool> mask = {});

/// Sum of the indexed codewords; skipped entries contribute nothing.
Vector decode_channel(const Codebook& book, std::span<const int> indices);

/// Partial sum over the first `layers` entries.
Vector decode_prefix(const Codebook& book, std::span<const int> indices, int layers);

struct CodebookSet {
  std::array<std::optional<Codebook>, kPartRoleCount> books;

  const Codebook& at(PartRole role) const;
  Codebook& at(PartRole role);
  bool has(PartRole role) const { return books[static_cast<int>(role)].has_value(); }
  int layers() const;
};

/// Channel visiting order for token lists: positions, then rotations, then
/// grippers, original order within each group.
std::vector<std::size_t> group_major_order(std::span<const PartRole> roles);

/// Per-chunk indices, `layers` per channel, channels in group-major order.
struct TokenList {
  int layers = 0;
  std::vector<int> indices;

  bool operator==(const TokenList&) const = default;
};

TokenList encode_chunk(const CodebookSet& books, const Matrix& controls,
                       std::span<const PartRole> roles, std::span<const bool> mask = {});

/// Inverse of encode_chunk; `layers` < 0 decodes every layer, otherwise a prefix.
Matrix decode_chunk(const CodebookSet& books, const TokenList& tokens,
                    std::span<const PartRole> roles, int layers = -1);

struct TrainingSample {
  Matrix controls;  // N x d
  Matrix chunk;     // steps x d, normalized
};

struct LossReport {
  double recon = 0.0;           // repr + gamma * traj
  double recon_repr = 0.0;      // |z - z_hat|^2
  double recon_traj = 0.0;      // |a - B(z_hat)|^2
  double commitment = 0.0;
  double dropout = 0.0;         // |z - z_hat_m|^2
  double total = 0.0;
  std::size_t samples = 0;
  std::size_t updates = 0;      // EMA minibatch steps
  std::size_t reseeded = 0;
};

/// k-means++ seeding per group and layer from the first minibatch's residuals.
CodebookSet init_codebooks(std::span<const TrainingSample> samples,
                           std::span<const PartRole> roles, const RvqConfig& cfg,
                           std::uint64_t seed);

/// One pass over `samples` in the given order: EMA codebook updates per
/// minibatch with per-sample layer dropout, then dead-code reseeding from the
/// last minibatch. Losses are means per sample over the pass, measured with
/// the codebooks each minibatch saw.
LossReport train_epoch(CodebookSet& books, std::span<const TrainingSample> samples,
                       std::span<const PartRole> roles, const SplineConfig& spline,
                       const RvqConfig& cfg, std::uint64_t seed, int epoch = 0);

struct LayerUsage {
  PartRole group = PartRole::position;
  int layer = 0;  // 1-based
  std::vector<std::uint64_t> histogram;
  std::uint64_t assignments = 0;
  double perplexity = 0.0;  // exp(entropy)
  int dead = 0;             // never-used codewords
};

std::vector<LayerUsage> utilization_stats(const CodebookSet& books,
                                          std::span<const TokenList> encodings,
                                          std::span<const PartRole> roles);

}  // namespace omnisat
