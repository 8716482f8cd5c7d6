#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "omnisat/bpe.hpp"
#include "omnisat/bspline.hpp"
#include "omnisat/core.hpp"
#include "omnisat/tokenizer.hpp"

namespace omnisat {

struct EncodedChunk {
  TokenStream ids;          // emitted ids
  std::size_t pre_bpe = 0;  // ids before merging (equal to ids.size() without BPE)
  std::size_t clamped = 0;  // values clamped into range before quantization
};

/// Chunk-level interface shared by OmniSAT and the reference tokenizers. Chunks
/// are steps x d in normalized units.
class ChunkTokenizer {
 public:
  virtual ~ChunkTokenizer() = default;

  virtual std::string name() const = 0;
  virtual int horizon() const = 0;
  virtual const NormStats& stats_for(const Trajectory& traj) const = 0;
  virtual EncodedChunk encode(const Matrix& chunk) const = 0;
  virtual Matrix decode(std::span<const int> ids, int steps) const = 0;
};

struct BinningConfig {
  int bins = 256;

  void validate() const;
};

/// Bin of v in a uniform partition of [-1, 1]; v is clamped first.
int bin_index(double v, int bins);
double bin_center(int index, int bins);

struct BinGrid {
  Eigen::MatrixXi bins;
  std::size_t clamped = 0;
};

BinGrid bin_encode(const BinningConfig& cfg, const Matrix& chunk);
Matrix bin_decode(const BinningConfig& cfg, const Eigen::MatrixXi& bins);

struct BeastConfig {
  SplineConfig spline;
  int bins = 256;

  void validate() const;
};

/// Control points fitted per channel, then binned: N x d indices.
BinGrid bspline_bin_encode(const BeastConfig& cfg, const Matrix& chunk,
                           std::span<const PartRole> roles);
Matrix bspline_bin_decode(const BeastConfig& cfg, const Eigen::MatrixXi& bins,
                          std::span<const PartRole> roles, int steps);

/// Orthonormal DCT-II along rows (time), column by column.
Matrix dct2(const Matrix& x);
/// Inverse of dct2 (orthonormal DCT-III).
Matrix idct2(const Matrix& coeffs);

struct FastConfig {
  double step = 1e-3;   // quantization step in normalized units
  int bpe_merges = 1024;

  void validate() const;
};

/// Rounded coefficients, low frequencies first and channels interleaved per frequency.
std::vector<long long> dct_quantize(const FastConfig& cfg, const Matrix& chunk);
Matrix dct_dequantize(const FastConfig& cfg, std::span<const long long> coeffs, int steps,
                      int dof);

/// Zigzag + LEB128 bytes; the byte alphabet [0, 256) is the BPE base vocabulary.
TokenStream coefficients_to_bytes(std::span<const long long> coeffs);
std::vector<long long> bytes_to_coefficients(std::span<const int> bytes);

inline constexpr int kByteVocab = 256;

TokenStream dct_bpe_encode(const FastConfig& cfg, const MergeTable& merges, const Matrix& chunk);
Matrix dct_bpe_decode(const FastConfig& cfg, const MergeTable& merges, std::span<const int> ids,
                      int steps, int dof);

/// Adapter over a fitted artifact.
class OmniSatTokenizer final : public ChunkTokenizer {
 public:
  explicit OmniSatTokenizer(std::shared_ptr<const TokenizerArtifact> artifact, int layers = -1);

  std::string name() const override;
  int horizon() const override { return artifact_->config.horizon; }
  const NormStats& stats_for(const Trajectory& traj) const override;
  EncodedChunk encode(const Matrix& chunk) const override;
  Matrix decode(std::span<const int> ids, int steps) const override;

  const TokenizerArtifact& artifact() const { return *artifact_; }

 private:
  std::shared_ptr<const TokenizerArtifact> artifact_;
  int layers_;
};

/// Baselines normalize with corpus-level percentiles fitted on `train`.
std::unique_ptr<ChunkTokenizer> make_binning(std::span<const Trajectory> train,
                                             const BinningConfig& cfg,
                                             int horizon = kDefaultHorizon);
std::unique_ptr<ChunkTokenizer> make_beast(std::span<const Trajectory> train,
                                           const BeastConfig& cfg, int horizon = kDefaultHorizon);
/// Trains the byte-level merge table on the chunks of `train`.
std::unique_ptr<ChunkTokenizer> make_fast(std::span<const Trajectory> train, const FastConfig& cfg,
                                          int horizon = kDefaultHorizon);

}  // namespace omnisat
