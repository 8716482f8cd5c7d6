#include "omnisat/rvq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "omnisat/random.hpp"

namespace omnisat {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kMaskStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kReseedStream = 3;

}  // namespace

void RvqConfig::validate() const {
  if (layers < 1) throw Error("rvq: need at least one layer");
  for (const int k : codebook_size) {
    if (k < (null_codeword ? 2 : 1)) {
      throw Error("rvq: codebook too small (slot 0 is reserved for the null codeword)");
    }
  }
  if (!(decay > 0.0 && decay < 1.0)) throw Error("rvq: EMA decay must lie in (0, 1)");
  if (!(drop_p >= 0.0 && drop_p < 1.0)) throw Error("rvq: drop_p must lie in [0, 1)");
  if (!(reseed_threshold >= 0.0)) throw Error("rvq: reseed threshold must be >= 0");
  if (epochs < 0) throw Error("rvq: negative epoch count");
  if (batch_size < 1) throw Error("rvq: batch size must be >= 1");
}

Codebook Codebook::zeros(PartRole group, int layers, int size, int dim, double decay,
                         bool null_slot) {
  Codebook book;
  book.group = group;
  book.decay = decay;
  book.null_slot = null_slot;
  for (int l = 0; l < layers; ++l) {
    book.codewords.push_back(Matrix::Zero(size, dim));
    book.ema_counts.push_back(Vector::Zero(size));
    book.ema_sums.push_back(Matrix::Zero(size, dim));
  }
  return book;
}

void Codebook::set_codeword(int layer, int index, const Vector& value) {
  codewords[layer].row(index) = value.transpose();
  ema_sums[layer].row(index).setZero();
  ema_counts[layer](index) = 0.0;
}

Nearest nearest_codeword(const Matrix& table, const Vector& r) {
  if (table.rows() == 0) throw Error("nearest_codeword: empty codebook");
  if (table.cols() != r.size()) {
    throw Error("nearest_codeword: vector of size " + std::to_string(r.size()) +
                " against codewords of size " + std::to_string(table.cols()));
  }
  if (!r.allFinite()) throw Error("nearest_codeword: non-finite input");
  Nearest best{0, std::numeric_limits<double>::infinity()};
  const Eigen::Index n = table.cols();
  for (Eigen::Index k = 0; k < table.rows(); ++k) {
    double d2 = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double diff = r(j) - table(k, j);
      d2 += diff * diff;
    }
    if (d2 < best.distance2) best = {static_cast<int>(k), d2};
  }
  return best;
}

ChannelEncoding encode_channel(const Codebook& book, const Vector& s, std::span<const bool> mask) {
  const int layers = book.layers();
  if (!mask.empty() && static_cast<int>(mask.size()) != layers) {
    throw Error("encode_channel: mask has " + std::to_string(mask.size()) + " entries for " +
                std::to_string(layers) + " layers");
  }
  if (s.size() != book.dim()) {
    throw Error("encode_channel: control vector of size " + std::to_string(s.size()) +
                ", codewords have size " + std::to_string(book.dim()));
  }
  if (!s.allFinite()) throw Error("encode_channel: non-finite control vector");
  ChannelEncoding enc;
  enc.indices.reserve(static_cast<std::size_t>(layers));
  enc.residual.reserve(static_cast<std::size_t>(layers) + 1);
  enc.residual.push_back(s);
  for (int l = 0; l < layers; ++l) {
    const Vector& r = enc.residual.back();
    if (!mask.empty() && !mask[l]) {
      enc.indices.push_back(kSkippedLayer);
      enc.residual.push_back(r);
      continue;
    }
    const Nearest hit = nearest_codeword(book.codewords[l], r);
    enc.indices.push_back(hit.index);
    enc.residual.push_back(r - book.codewords[l].row(hit.index).transpose());
  }
  return enc;
}

Vector decode_prefix(const Codebook& book, std::span<const int> indices, int layers) {
  if (static_cast<int>(indices.size()) != book.layers()) {
    throw Error("decode: " + std::to_string(indices.size()) + " indices for " +
                std::to_string(book.layers()) + " layers");
  }
  if (layers < 0 || layers > book.layers()) throw Error("decode: prefix length out of range");
  Vector out = Vector::Zero(book.dim());
  for (int l = 0; l < layers; ++l) {
    const int q = indices[l];
    if (q == kSkippedLayer) continue;
    if (q < 0 || q >= book.size()) {
      throw Error("decode: index " + std::to_string(q) + " out of range for codebook of size " +
                  std::to_string(book.size()));
    }
    out += book.codewords[l].row(q).transpose();
  }
  return out;
}

Vector decode_channel(const Codebook& book, std::span<const int> indices) {
  return decode_prefix(book, indices, book.layers());
}

const Codebook& CodebookSet::at(PartRole role) const {
  const auto& book = books[static_cast<int>(role)];
  if (!book) throw Error("no codebook for part group '" + std::string(to_string(role)) + "'");
  return *book;
}

Codebook& CodebookSet::at(PartRole role) {
  auto& book = books[static_cast<int>(role)];
  if (!book) throw Error("no codebook for part group '" + std::string(to_string(role)) + "'");
  return *book;
}

int CodebookSet::layers() const {
  for (const auto& b : books) {
    if (b) return b->layers();
  }
  return 0;
}

std::vector<std::size_t> group_major_order(std::span<const PartRole> roles) {
  std::vector<std::size_t> order(roles.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return static_cast<int>(roles[a]) < static_cast<int>(roles[b]);
  });
  return order;
}

TokenList encode_chunk(const CodebookSet& books, const Matrix& controls,
                       std::span<const PartRole> roles, std::span<const bool> mask) {
  if (static_cast<std::size_t>(controls.cols()) != roles.size()) {
    throw Error("encode_chunk: " + std::to_string(controls.cols()) + " channels for " +
                std::to_string(roles.size()) + " roles");
  }
  TokenList tokens;
  tokens.layers = books.layers();
  tokens.indices.reserve(roles.size() * static_cast<std::size_t>(tokens.layers));
  for (const std::size_t c : group_major_order(roles)) {
    const auto enc =
        encode_channel(books.at(roles[c]), controls.col(static_cast<Eigen::Index>(c)), mask);
    tokens.indices.insert(tokens.indices.end(), enc.indices.begin(), enc.indices.end());
  }
  return tokens;
}

Matrix decode_chunk(const CodebookSet& books, const TokenList& tokens,
                    std::span<const PartRole> roles, int layers) {
  const int depth = tokens.layers;
  if (depth != books.layers()) {
    throw Error("decode_chunk: token list has " + std::to_string(depth) +
                " layers, codebooks have " + std::to_string(books.layers()));
  }
  if (tokens.indices.size() != roles.size() * static_cast<std::size_t>(depth)) {
    throw Error("decode_chunk: " + std::to_string(tokens.indices.size()) + " indices for " +
                std::to_string(roles.size()) + " channels x " + std::to_string(depth) + " layers");
  }
  const int prefix = layers < 0 ? depth : layers;
  int dim = 0;
  for (const auto r : roles) dim = books.at(r).dim();
  Matrix out(dim, static_cast<Eigen::Index>(roles.size()));
  std::size_t slot = 0;
  for (const std::size_t c : group_major_order(roles)) {
    const std::span<const int> idx(tokens.indices.data() + slot * static_cast<std::size_t>(depth),
                                   static_cast<std::size_t>(depth));
    out.col(static_cast<Eigen::Index>(c)) = decode_prefix(books.at(roles[c]), idx, prefix);
    ++slot;
  }
  return out;
}

namespace {

// k-means++: D^2-weighted picks. The null codeword, when present, acts as the
// initial center; otherwise the first pick is uniform.
void seed_layer(Matrix& table, bool null_slot, const std::vector<Vector>& points, Rng& rng) {
  const auto k = table.rows();
  table.setZero();
  if (points.empty()) return;
  std::vector<double> d2(points.size(), 0.0);
  if (null_slot) {
    for (std::size_t i = 0; i < points.size(); ++i) d2[i] = points[i].squaredNorm();
  }
  for (Eigen::Index slot = null_slot ? 1 : 0; slot < k; ++slot) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = 0;
    if (slot == 0) {
      pick = static_cast<std::size_t>(uniform_below(rng, points.size()));
      table.row(slot) = points[pick].transpose();
      for (std::size_t i = 0; i < points.size(); ++i) {
        d2[i] = (points[i] - points[pick]).squaredNorm();
      }
      continue;
    }
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      pick = points.size() - 1;
      for (std::size_t i = 0; i < points.size(); ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(uniform_below(rng, points.size()));
    }
    table.row(slot) = points[pick].transpose();
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], (points[i] - points[pick]).squaredNorm());
    }
  }
}

}  // namespace

CodebookSet init_codebooks(std::span<const TrainingSample> samples,
                           std::span<const PartRole> roles, const RvqConfig& cfg,
                           std::uint64_t seed) {
  cfg.validate();
  if (samples.empty()) throw Error("init_codebooks: no training samples");
  const auto first = samples.first(std::min<std::size_t>(samples.size(),
                                                         static_cast<std::size_t>(cfg.batch_size)));
  const int dim = static_cast<int>(samples.front().controls.rows());

  CodebookSet books;
  for (int g = 0; g < kPartRoleCount; ++g) {
    const auto role = static_cast<PartRole>(g);
    std::vector<Vector> residuals;
    for (const auto& sample : first) {
      for (std::size_t c = 0; c < roles.size(); ++c) {
        if (roles[c] == role) residuals.push_back(sample.controls.col(static_cast<Eigen::Index>(c)));
      }
    }
    if (residuals.empty()) continue;

    Codebook book =
        Codebook::zeros(role, cfg.layers, cfg.size_for(role), dim, cfg.decay, cfg.null_codeword);
    for (int l = 0; l < cfg.layers; ++l) {
      Rng rng(derive_seed(seed, {kInitStream, static_cast<std::uint64_t>(g),
                                 static_cast<std::uint64_t>(l)}));
      seed_layer(book.codewords[l], book.null_slot, residuals, rng);
      for (auto& r : residuals) {
        r -= book.codewords[l].row(nearest_codeword(book.codewords[l], r).index).transpose();
      }
    }
    books.books[g] = std::move(book);
  }
  return books;
}

LossReport train_epoch(CodebookSet& books, std::span<const TrainingSample> samples,
                       std::span<const PartRole> roles, const SplineConfig& spline,
                       const RvqConfig& cfg, std::uint64_t seed, int epoch) {
  cfg.validate();
  if (samples.empty()) throw Error("train_epoch: empty batch");
  const int depth = books.layers();
  if (depth != cfg.layers) throw Error("train_epoch: codebook depth does not match config");

  struct Accumulator {
    std::vector<Vector> counts;
    std::vector<Matrix> sums;
    std::vector<std::vector<Vector>> inputs;  // residual entering each layer, last minibatch
  };
  std::array<std::optional<Accumulator>, kPartRoleCount> acc;
  for (int g = 0; g < kPartRoleCount; ++g) {
    if (!books.books[g]) continue;
    const auto& book = *books.books[g];
    Accumulator a;
    for (int l = 0; l < depth; ++l) {
      a.counts.push_back(Vector::Zero(book.size()));
      a.sums.push_back(Matrix::Zero(book.size(), book.dim()));
    }
    a.inputs.resize(static_cast<std::size_t>(depth));
    acc[g] = std::move(a);
  }

  LossReport report;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (std::size_t begin = 0; begin < samples.size(); begin += batch) {
    const std::size_t end = std::min(samples.size(), begin + batch);
    for (auto& a : acc) {
      if (!a) continue;
      for (int l = 0; l < depth; ++l) {
        a->counts[l].setZero();
        a->sums[l].setZero();
        a->inputs[l].clear();
      }
    }

    for (std::size_t pos = begin; pos < end; ++pos) {
      const auto& sample = samples[pos];
      if (static_cast<std::size_t>(sample.controls.cols()) != roles.size()) {
        throw Error("train_epoch: sample has " + std::to_string(sample.controls.cols()) +
                    " channels for " + std::to_string(roles.size()) + " roles");
      }
      // Keyed per (epoch, position, layer) so a layer's draws do not depend on depth.
      bool mask[64];
      std::span<const bool> mask_view;
      if (cfg.drop_p > 0.0) {
        if (depth > 64) throw Error("train_epoch: at most 64 layers supported with dropout");
        for (int l = 0; l < depth; ++l) {
          const auto key = derive_seed(seed, {kMaskStream, static_cast<std::uint64_t>(epoch),
                                              pos, static_cast<std::uint64_t>(l)});
          mask[l] = uniform01(key) >= cfg.drop_p;
        }
        mask_view = std::span<const bool>(mask, static_cast<std::size_t>(depth));
      }

      const Matrix& z = sample.controls;
      Matrix z_hat(z.rows(), z.cols());
      Matrix z_hat_m(z.rows(), z.cols());
      for (std::size_t c = 0; c < roles.size(); ++c) {
        const int g = static_cast<int>(roles[c]);
        const auto& book = books.at(roles[c]);
        const Vector s = z.col(static_cast<Eigen::Index>(c));
        const auto masked = encode_channel(book, s, mask_view);
        auto& a = *acc[g];
        for (int l = 0; l < depth; ++l) {
          a.inputs[l].push_back(masked.residual[l]);
          const int q = masked.indices[l];
          if (q == kSkippedLayer || book.pinned(q)) continue;
          a.counts[l](q) += 1.0;
          a.sums[l].row(q) += masked.residual[l].transpose();
        }
        z_hat_m.col(static_cast<Eigen::Index>(c)) = s - masked.residual.back();
        if (mask_view.empty()) {
          z_hat.col(static_cast<Eigen::Index>(c)) = z_hat_m.col(static_cast<Eigen::Index>(c));
        } else {
          z_hat.col(static_cast<Eigen::Index>(c)) = s - encode_channel(book, s).residual.back();
        }
      }

      const double repr = (z - z_hat).squaredNorm();
      double traj = 0.0;
      if (sample.chunk.size() > 0) {
        traj = (sample.chunk - reconstruct(z_hat, roles, spline, static_cast<int>(sample.chunk.rows())))
                   .squaredNorm();
      }
      report.recon_repr += repr;
      report.recon_traj += traj;
      report.commitment += 2.0 * repr;  // both stop-gradient terms share the same value
      report.dropout += (z - z_hat_m).squaredNorm();
    }

    for (int g = 0; g < kPartRoleCount; ++g) {
      if (!books.books[g]) continue;
      auto& book = *books.books[g];
      const auto& a = *acc[g];
      const double alpha = book.decay;
      for (int l = 0; l < depth; ++l) {
        for (Eigen::Index k = 0; k < book.size(); ++k) {
          if (book.pinned(static_cast<int>(k))) continue;
          book.ema_counts[l](k) = alpha * book.ema_counts[l](k) + (1.0 - alpha) * a.counts[l](k);
          book.ema_sums[l].row(k) = alpha * book.ema_sums[l].row(k) + (1.0 - alpha) * a.sums[l].row(k);
          if (book.ema_counts[l](k) > 0.0) {
            book.codewords[l].row(k) = book.ema_sums[l].row(k) / book.ema_counts[l](k);
          }
        }
      }
    }
    ++report.updates;
  }

  // Dead-code reseeding from the residuals of the last minibatch.
  for (int g = 0; g < kPartRoleCount; ++g) {
    if (!books.books[g]) continue;
    auto& book = *books.books[g];
    const auto& a = *acc[g];
    for (int l = 0; l < depth; ++l) {
      const auto& pool = a.inputs[l];
      if (pool.empty()) continue;
      Rng rng(derive_seed(seed, {kReseedStream, static_cast<std::uint64_t>(epoch),
                                 static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(l)}));
      for (int k = 0; k < book.size(); ++k) {
        if (book.pinned(k) || book.ema_counts[l](k) >= cfg.reseed_threshold) continue;
        book.set_codeword(l, k, pool[uniform_below(rng, pool.size())]);
        ++report.reseeded;
      }
    }
  }

  const auto n = static_cast<double>(samples.size());
  report.samples = samples.size();
  report.recon_repr /= n;
  report.recon_traj /= n;
  report.commitment /= n;
  report.dropout /= n;
  report.recon = report.recon_repr + cfg.gamma * report.recon_traj;
  report.total = report.recon + cfg.lambda1 * report.commitment + cfg.lambda2 * report.dropout;
  return report;
}

std::vector<LayerUsage> utilization_stats(const CodebookSet& books,
                                          std::span<const TokenList> encodings,
                                          std::span<const PartRole> roles) {
  const int depth = books.layers();
  std::vector<LayerUsage> usage;
  std::array<int, kPartRoleCount> first_slot{-1, -1, -1};
  for (int g = 0; g < kPartRoleCount; ++g) {
    if (!books.books[g]) continue;
    first_slot[g] = static_cast<int>(usage.size());
    for (int l = 0; l < depth; ++l) {
      LayerUsage u;
      u.group = static_cast<PartRole>(g);
      u.layer = l + 1;
      u.histogram.assign(static_cast<std::size_t>(books.books[g]->size()), 0);
      usage.push_back(std::move(u));
    }
  }

  const auto order = group_major_order(roles);
  for (const auto& tokens : encodings) {
    if (tokens.indices.size() != order.size() * static_cast<std::size_t>(depth)) {
      throw Error("utilization_stats: token list does not match channel layout");
    }
    for (std::size_t slot = 0; slot < order.size(); ++slot) {
      const int g = static_cast<int>(roles[order[slot]]);
      if (first_slot[g] < 0) throw Error("utilization_stats: no codebook for channel group");
      for (int l = 0; l < depth; ++l) {
        const int q = tokens.indices[slot * static_cast<std::size_t>(depth) + static_cast<std::size_t>(l)];
        if (q == kSkippedLayer) continue;
        auto& u = usage[static_cast<std::size_t>(first_slot[g] + l)];
        if (q < 0 || static_cast<std::size_t>(q) >= u.histogram.size()) {
          throw Error("utilization_stats: index out of range");
        }
        ++u.histogram[static_cast<std::size_t>(q)];
        ++u.assignments;
      }
    }
  }

  for (auto& u : usage) {
    double entropy = 0.0;
    u.dead = 0;
    for (const auto count : u.histogram) {
      if (count == 0) {
        ++u.dead;
        continue;
      }
      const double p = static_cast<double>(count) / static_cast<double>(u.assignments);
      entropy -= p * std::log(p);
    }
    u.perplexity = u.assignments == 0 ? 0.0 : std::exp(entropy);
  }
  return usage;
}

}  // namespace omnisat
