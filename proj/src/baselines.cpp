#include "omnisat/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace omnisat {

namespace {

void check_finite(const Matrix& chunk, const char* who) {
  if (!chunk.allFinite()) throw Error(std::string(who) + ": non-finite input");
  if (chunk.rows() < 2 || chunk.cols() < 1) throw Error(std::string(who) + ": empty chunk");
}

NormStats corpus_stats(std::span<const Trajectory> train) {
  if (train.empty()) throw Error("baseline: empty training corpus");
  for (const auto& t : train) t.validate();
  return fit_norm_stats(train, train.front().dof());
}

Matrix basis_dct(int n) {
  Matrix c(n, n);
  const double s0 = std::sqrt(1.0 / n);
  const double sk = std::sqrt(2.0 / n);
  for (int k = 0; k < n; ++k) {
    for (int t = 0; t < n; ++t) {
      c(k, t) = (k == 0 ? s0 : sk) * std::cos(std::numbers::pi * (t + 0.5) * k / n);
    }
  }
  return c;
}

TokenStream flatten(const Eigen::MatrixXi& grid) {
  TokenStream out;
  out.reserve(static_cast<std::size_t>(grid.size()));
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    for (Eigen::Index c = 0; c < grid.cols(); ++c) out.push_back(grid(r, c));
  }
  return out;
}

Eigen::MatrixXi unflatten(std::span<const int> ids, Eigen::Index rows, Eigen::Index cols,
                          int vocab) {
  if (static_cast<Eigen::Index>(ids.size()) != rows * cols) {
    throw Error("decode: " + std::to_string(ids.size()) + " ids, expected " +
                std::to_string(rows * cols));
  }
  Eigen::MatrixXi grid(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const int id = ids[static_cast<std::size_t>(r * cols + c)];
      if (id < 0 || id >= vocab) throw Error("decode: id " + std::to_string(id) + " out of range");
      grid(r, c) = id;
    }
  }
  return grid;
}

class BinningTokenizer final : public ChunkTokenizer {
 public:
  BinningTokenizer(NormStats stats, BinningConfig cfg, int horizon)
      : stats_(std::move(stats)), cfg_(cfg), horizon_(horizon) {}

  std::string name() const override { return "binning-" + std::to_string(cfg_.bins); }
  int horizon() const override { return horizon_; }
  const NormStats& stats_for(const Trajectory&) const override { return stats_; }

  EncodedChunk encode(const Matrix& chunk) const override {
    const BinGrid grid = bin_encode(cfg_, chunk);
    auto ids = flatten(grid.bins);
    const auto n = ids.size();
    return {std::move(ids), n, grid.clamped};
  }

  Matrix decode(std::span<const int> ids, int steps) const override {
    return bin_decode(cfg_, unflatten(ids, steps, static_cast<Eigen::Index>(stats_.channels()),
                                      cfg_.bins));
  }

 private:
  NormStats stats_;
  BinningConfig cfg_;
  int horizon_;
};

class BeastTokenizer final : public ChunkTokenizer {
 public:
  BeastTokenizer(NormStats stats, std::vector<PartRole> roles, BeastConfig cfg, int horizon)
      : stats_(std::move(stats)), roles_(std::move(roles)), cfg_(cfg), horizon_(horizon) {}

  std::string name() const override { return "beast-" + std::to_string(cfg_.bins); }
  int horizon() const override { return horizon_; }
  const NormStats& stats_for(const Trajectory&) const override { return stats_; }

  EncodedChunk encode(const Matrix& chunk) const override {
    const BinGrid grid = bspline_bin_encode(cfg_, chunk, roles_);
    auto ids = flatten(grid.bins);
    const auto n = ids.size();
    return {std::move(ids), n, grid.clamped};
  }

  Matrix decode(std::span<const int> ids, int steps) const override {
    const auto grid = unflatten(ids, cfg_.spline.n_control, static_cast<Eigen::Index>(roles_.size()),
                                cfg_.bins);
    return bspline_bin_decode(cfg_, grid, roles_, steps);
  }

 private:
  NormStats stats_;
  std::vector<PartRole> roles_;
  BeastConfig cfg_;
  int horizon_;
};

class FastTokenizer final : public ChunkTokenizer {
 public:
  FastTokenizer(NormStats stats, FastConfig cfg, MergeTable merges, int horizon)
      : stats_(std::move(stats)), cfg_(cfg), merges_(std::move(merges)), horizon_(horizon) {}

  std::string name() const override { return "fast"; }
  int horizon() const override { return horizon_; }
  const NormStats& stats_for(const Trajectory&) const override { return stats_; }

  EncodedChunk encode(const Matrix& chunk) const override {
    const auto bytes = coefficients_to_bytes(dct_quantize(cfg_, chunk));
    return {bpe_encode(merges_, bytes), bytes.size(), 0};
  }

  Matrix decode(std::span<const int> ids, int steps) const override {
    return dct_bpe_decode(cfg_, merges_, ids, steps, static_cast<int>(stats_.channels()));
  }

 private:
  NormStats stats_;
  FastConfig cfg_;
  MergeTable merges_;
  int horizon_;
};

}  // namespace

void BinningConfig::validate() const {
  if (bins < 2) throw Error("binning: bins must be >= 2, got " + std::to_string(bins));
}

int bin_index(double v, int bins) {
  const double u = (std::clamp(v, -1.0, 1.0) + 1.0) * 0.5 * bins;
  return std::min(static_cast<int>(std::floor(u)), bins - 1);
}

double bin_center(int index, int bins) { return -1.0 + (index + 0.5) * 2.0 / bins; }

BinGrid bin_encode(const BinningConfig& cfg, const Matrix& chunk) {
  cfg.validate();
  if (!chunk.allFinite()) throw Error("bin_encode: non-finite input");
  BinGrid out;
  out.bins.resize(chunk.rows(), chunk.cols());
  for (Eigen::Index r = 0; r < chunk.rows(); ++r) {
    for (Eigen::Index c = 0; c < chunk.cols(); ++c) {
      const double v = chunk(r, c);
      if (v < -1.0 || v > 1.0) ++out.clamped;
      out.bins(r, c) = bin_index(v, cfg.bins);
    }
  }
  return out;
}

Matrix bin_decode(const BinningConfig& cfg, const Eigen::MatrixXi& bins) {
  cfg.validate();
  Matrix out(bins.rows(), bins.cols());
  for (Eigen::Index r = 0; r < bins.rows(); ++r) {
    for (Eigen::Index c = 0; c < bins.cols(); ++c) {
      if (bins(r, c) < 0 || bins(r, c) >= cfg.bins) throw Error("bin_decode: index out of range");
      out(r, c) = bin_center(bins(r, c), cfg.bins);
    }
  }
  return out;
}

void BeastConfig::validate() const {
  spline.validate();
  BinningConfig{bins}.validate();
}

BinGrid bspline_bin_encode(const BeastConfig& cfg, const Matrix& chunk,
                           std::span<const PartRole> roles) {
  cfg.validate();
  check_finite(chunk, "bspline_bin_encode");
  return bin_encode({cfg.bins}, fit_control_points(chunk, roles, cfg.spline));
}

Matrix bspline_bin_decode(const BeastConfig& cfg, const Eigen::MatrixXi& bins,
                          std::span<const PartRole> roles, int steps) {
  return reconstruct(bin_decode({cfg.bins}, bins), roles, cfg.spline, steps);
}

Matrix dct2(const Matrix& x) { return basis_dct(static_cast<int>(x.rows())) * x; }

Matrix idct2(const Matrix& coeffs) {
  return basis_dct(static_cast<int>(coeffs.rows())).transpose() * coeffs;
}

void FastConfig::validate() const {
  if (!(step > 0.0) || !std::isfinite(step)) throw Error("fast: step must be positive");
  if (bpe_merges < 0) throw Error("fast: bpe_merges must be >= 0");
}

std::vector<long long> dct_quantize(const FastConfig& cfg, const Matrix& chunk) {
  cfg.validate();
  check_finite(chunk, "dct_bpe_encode");
  const Matrix coeffs = dct2(chunk);
  std::vector<long long> out;
  out.reserve(static_cast<std::size_t>(coeffs.size()));
  for (Eigen::Index k = 0; k < coeffs.rows(); ++k) {
    for (Eigen::Index c = 0; c < coeffs.cols(); ++c) {
      out.push_back(std::llround(coeffs(k, c) / cfg.step));
    }
  }
  return out;
}

Matrix dct_dequantize(const FastConfig& cfg, std::span<const long long> coeffs, int steps,
                      int dof) {
  cfg.validate();
  if (coeffs.size() != static_cast<std::size_t>(steps) * static_cast<std::size_t>(dof)) {
    throw Error("dct_bpe_decode: " + std::to_string(coeffs.size()) + " coefficients, expected " +
                std::to_string(steps * dof));
  }
  Matrix m(steps, dof);
  for (int k = 0; k < steps; ++k) {
    for (int c = 0; c < dof; ++c) {
      m(k, c) = static_cast<double>(coeffs[static_cast<std::size_t>(k * dof + c)]) * cfg.step;
    }
  }
  return idct2(m);
}

TokenStream coefficients_to_bytes(std::span<const long long> coeffs) {
  TokenStream out;
  out.reserve(coeffs.size());
  for (const long long q : coeffs) {
    auto z = q >= 0 ? static_cast<unsigned long long>(q) << 1
                    : (static_cast<unsigned long long>(-(q + 1)) << 1) | 1u;
    do {
      const auto low = static_cast<int>(z & 0x7f);
      z >>= 7;
      out.push_back(z ? (low | 0x80) : low);
    } while (z);
  }
  return out;
}

std::vector<long long> bytes_to_coefficients(std::span<const int> bytes) {
  std::vector<long long> out;
  unsigned long long z = 0;
  int shift = 0;
  bool open = false;
  for (const int b : bytes) {
    if (b < 0 || b >= kByteVocab) throw Error("dct_bpe_decode: byte " + std::to_string(b));
    if (shift > 63) throw Error("dct_bpe_decode: coefficient overflows 64 bits");
    z |= static_cast<unsigned long long>(b & 0x7f) << shift;
    shift += 7;
    open = (b & 0x80) != 0;
    if (!open) {
      out.push_back((z & 1u) ? -static_cast<long long>(z >> 1) - 1 : static_cast<long long>(z >> 1));
      z = 0;
      shift = 0;
    }
  }
  if (open) throw Error("dct_bpe_decode: truncated coefficient");
  return out;
}

TokenStream dct_bpe_encode(const FastConfig& cfg, const MergeTable& merges, const Matrix& chunk) {
  return bpe_encode(merges, coefficients_to_bytes(dct_quantize(cfg, chunk)));
}

Matrix dct_bpe_decode(const FastConfig& cfg, const MergeTable& merges, std::span<const int> ids,
                      int steps, int dof) {
  const auto bytes = bpe_decode(merges, ids);
  return dct_dequantize(cfg, bytes_to_coefficients(bytes), steps, dof);
}

OmniSatTokenizer::OmniSatTokenizer(std::shared_ptr<const TokenizerArtifact> artifact, int layers)
    : artifact_(std::move(artifact)), layers_(layers) {
  if (!artifact_) throw Error("OmniSatTokenizer: null artifact");
}

std::string OmniSatTokenizer::name() const {
  const int depth = layers_ < 0 ? artifact_->layout.layers() : layers_;
  return "omnisat-" + std::to_string(depth);
}

const NormStats& OmniSatTokenizer::stats_for(const Trajectory& traj) const {
  return artifact_->stats_for(traj.embodiment);
}

EncodedChunk OmniSatTokenizer::encode(const Matrix& chunk) const {
  const TokenStream raw = encode_normalized_chunk(*artifact_, chunk);
  return {bpe_encode(artifact_->merges, raw), raw.size(), 0};
}

Matrix OmniSatTokenizer::decode(std::span<const int> ids, int steps) const {
  return decode_normalized_chunk(*artifact_, ids, steps, layers_);
}

std::unique_ptr<ChunkTokenizer> make_binning(std::span<const Trajectory> train,
                                             const BinningConfig& cfg, int horizon) {
  cfg.validate();
  return std::make_unique<BinningTokenizer>(corpus_stats(train), cfg, horizon);
}

std::unique_ptr<ChunkTokenizer> make_beast(std::span<const Trajectory> train,
                                           const BeastConfig& cfg, int horizon) {
  cfg.validate();
  auto stats = corpus_stats(train);
  return std::make_unique<BeastTokenizer>(std::move(stats), roles_of(train.front().channels), cfg,
                                          horizon);
}

std::unique_ptr<ChunkTokenizer> make_fast(std::span<const Trajectory> train, const FastConfig& cfg,
                                          int horizon) {
  cfg.validate();
  auto stats = corpus_stats(train);
  std::vector<TokenStream> streams;
  for (const auto& traj : train) {
    const Matrix normalized = normalize(traj.values, stats);
    for (const auto& span : plan_chunks(traj.steps(), horizon).spans) {
      const Matrix block = normalized.middleRows(static_cast<Eigen::Index>(span.start),
                                                 static_cast<Eigen::Index>(span.length));
      streams.push_back(coefficients_to_bytes(dct_quantize(cfg, block)));
    }
  }
  MergeTable merges = train_merges(streams, kByteVocab, kByteVocab + cfg.bpe_merges);
  return std::make_unique<FastTokenizer>(std::move(stats), cfg, std::move(merges), horizon);
}

}  // namespace omnisat
