#include "omnisat/tokenizer.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "omnisat/random.hpp"

namespace omnisat {

namespace {

constexpr std::uint64_t kShuffleStream = 11;
constexpr std::uint64_t kInitStream = 12;
constexpr std::uint64_t kTrainStream = 13;

[[noreturn]] void stage_error(const char* stage, const std::exception& e) {
  throw Error(std::string("fit stage '") + stage + "': " + e.what());
}

}  // namespace

TokenizerConfig TokenizerConfig::omnisat8() { return TokenizerConfig{}; }

TokenizerConfig TokenizerConfig::preset(const std::string& name) {
  TokenizerConfig cfg = omnisat8();
  if (name == "omnisat8") return cfg;
  if (name == "omnisat6") {
    cfg.rvq.layers = 6;
    return cfg;
  }
  if (name == "omnisat10") {
    cfg.rvq.layers = 10;
    return cfg;
  }
  throw Error("unknown tokenizer preset '" + name + "'");
}

void TokenizerConfig::validate() const {
  if (horizon < 2) throw Error("config: horizon must be >= 2");
  spline.validate();
  rvq.validate();
  if (bpe_merges < 0) throw Error("config: bpe_merges must be >= 0");
}

TokenLayout::TokenLayout(int layers, std::vector<GroupSlot> groups)
    : layers_(layers), groups_(std::move(groups)) {
  if (layers_ < 1) throw Error("layout: need at least one layer");
  int expected = 0;
  int last_role = -1;
  for (const auto& g : groups_) {
    if (static_cast<int>(g.role) <= last_role) throw Error("layout: groups out of order");
    if (g.size < 1) throw Error("layout: empty group");
    if (g.offset != expected) throw Error("layout: group offsets are not contiguous");
    expected += layers_ * g.size;
    last_role = static_cast<int>(g.role);
  }
  base_vocab_ = expected;
}

TokenLayout TokenLayout::build(int layers, std::span<const PartRole> present,
                               const RvqConfig& cfg) {
  std::vector<GroupSlot> groups;
  int offset = 0;
  for (int g = 0; g < kPartRoleCount; ++g) {
    const auto role = static_cast<PartRole>(g);
    if (std::find(present.begin(), present.end(), role) == present.end()) continue;
    groups.push_back({role, offset, cfg.size_for(role)});
    offset += layers * cfg.size_for(role);
  }
  return TokenLayout(layers, std::move(groups));
}

const GroupSlot& TokenLayout::slot(PartRole role) const {
  for (const auto& g : groups_) {
    if (g.role == role) return g;
  }
  throw Error("layout: no slot for part group '" + std::string(to_string(role)) + "'");
}

int TokenLayout::token_id(PartRole role, int layer, int index) const {
  const auto& g = slot(role);
  if (layer < 1 || layer > layers_) throw Error("layout: layer out of range");
  if (index < 0 || index >= g.size) {
    throw Error("layout: index " + std::to_string(index) + " out of range for K = " +
                std::to_string(g.size));
  }
  return g.offset + (layer - 1) * g.size + index;
}

TokenAddress TokenLayout::address(int id) const {
  if (id < 0 || id >= base_vocab_) {
    throw Error("layout: id " + std::to_string(id) + " outside base vocabulary " +
                std::to_string(base_vocab_));
  }
  for (const auto& g : groups_) {
    const int local = id - g.offset;
    if (local < layers_ * g.size) return {g.role, local / g.size + 1, local % g.size};
  }
  throw Error("layout: id not covered");  // unreachable for a valid layout
}

const NormStats& TokenizerArtifact::stats_for(const std::string& embodiment) const {
  if (const auto it = embodiment_norm.find(embodiment); it != embodiment_norm.end()) {
    return it->second;
  }
  return norm;
}

std::string corpus_fingerprint(std::span<const Trajectory> corpus) {
  // FNV-1a, 64 bit.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto feed = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& traj : corpus) {
    feed(traj.id.data(), traj.id.size() + 1);
    feed(traj.embodiment.data(), traj.embodiment.size() + 1);
    for (const auto& c : traj.channels) {
      feed(c.name.data(), c.name.size() + 1);
      const int role = static_cast<int>(c.role);
      feed(&role, sizeof role);
    }
    const std::uint64_t shape[2] = {traj.steps(), traj.dof()};
    feed(shape, sizeof shape);
    for (Eigen::Index t = 0; t < traj.values.rows(); ++t) {
      for (Eigen::Index c = 0; c < traj.values.cols(); ++c) {
        const double v = traj.values(t, c);
        feed(&v, sizeof v);
      }
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TokenizerArtifact fit(std::span<const Trajectory> corpus, const TokenizerConfig& config,
                      std::uint64_t seed) {
  TokenizerArtifact art;
  art.config = config;

  try {
    config.validate();
    if (corpus.empty()) throw Error("empty corpus");
    art.channels = corpus.front().channels;
    for (const auto& traj : corpus) {
      traj.validate();
      if (traj.channels.size() != art.channels.size() ||
          roles_of(traj.channels) != roles_of(art.channels)) {
        throw Error("trajectory '" + traj.id + "' has a different channel layout");
      }
    }
  } catch (const std::exception& e) {
    stage_error("validate", e);
  }
  const auto roles = art.roles();

  try {
    art.norm = fit_norm_stats(corpus, art.channels.size());
    if (config.per_embodiment_stats) {
      std::map<std::string, std::vector<Trajectory>> by_embodiment;
      for (const auto& traj : corpus) by_embodiment[traj.embodiment].push_back(traj);
      for (const auto& [name, group] : by_embodiment) {
        art.embodiment_norm.emplace(name, fit_norm_stats(group, art.channels.size()));
      }
    }
  } catch (const std::exception& e) {
    stage_error("normalize", e);
  }

  std::vector<TrainingSample> samples;
  try {
    for (const auto& traj : corpus) {
      const Matrix normalized = normalize(traj.values, art.stats_for(traj.embodiment));
      auto chunks = chunk(normalized, traj.id, config.horizon);
      art.metadata.dropped_steps += chunks.dropped_steps;
      for (auto& c : chunks.chunks) {
        samples.push_back({fit_control_points(c.values, roles, config.spline), std::move(c.values)});
      }
    }
    if (samples.empty()) throw Error("corpus yields no chunks");
  } catch (const std::exception& e) {
    stage_error("spline", e);
  }

  try {
    const auto epoch_order = [&](int epoch) {
      std::vector<std::size_t> order(samples.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(derive_seed(seed, {kShuffleStream, static_cast<std::uint64_t>(epoch)}));
      shuffle(order.begin(), order.end(), rng);
      std::vector<TrainingSample> ordered;
      ordered.reserve(order.size());
      for (const auto i : order) ordered.push_back(samples[i]);
      return ordered;
    };
    art.codebooks = init_codebooks(epoch_order(0), roles, config.rvq, derive_seed(seed, {kInitStream}));
    for (int e = 0; e < config.rvq.epochs; ++e) {
      art.metadata.epoch_losses.push_back(train_epoch(art.codebooks, epoch_order(e), roles,
                                                      config.spline, config.rvq,
                                                      derive_seed(seed, {kTrainStream}), e));
    }
  } catch (const std::exception& e) {
    stage_error("rvq", e);
  }

  try {
    art.layout = TokenLayout::build(config.rvq.layers, roles, config.rvq);
    std::vector<TokenStream> streams;
    streams.reserve(samples.size());
    for (const auto& s : samples) streams.push_back(encode_normalized_chunk(art, s.chunk));
    art.merges = train_merges(streams, art.layout.base_vocab(),
                              art.layout.base_vocab() + config.bpe_merges);
  } catch (const std::exception& e) {
    stage_error("bpe", e);
  }

  art.metadata.seed = seed;
  art.metadata.epochs = config.rvq.epochs;
  art.metadata.corpus_fingerprint = corpus_fingerprint(corpus);
  art.metadata.trajectories = corpus.size();
  art.metadata.chunks = samples.size();
  return art;
}

TokenStream encode_normalized_chunk(const TokenizerArtifact& artifact, const Matrix& chunk) {
  const auto roles = artifact.roles();
  const Matrix controls = fit_control_points(chunk, roles, artifact.config.spline);
  const TokenList tokens = encode_chunk(artifact.codebooks, controls, roles);
  const int depth = tokens.layers;
  TokenStream ids;
  ids.reserve(tokens.indices.size());
  std::size_t slot = 0;
  for (const std::size_t c : group_major_order(roles)) {
    for (int l = 0; l < depth; ++l) {
      ids.push_back(artifact.layout.token_id(
          roles[c], l + 1, tokens.indices[slot * static_cast<std::size_t>(depth) + static_cast<std::size_t>(l)]));
    }
    ++slot;
  }
  return ids;
}

Matrix decode_normalized_chunk(const TokenizerArtifact& artifact, std::span<const int> ids,
                               int steps, int layers) {
  if (steps < 2) throw Error("detokenize: chunk length must be >= 2");
  const auto roles = artifact.roles();
  const TokenStream primitive = bpe_decode(artifact.merges, ids);
  const int depth = artifact.layout.layers();
  if (primitive.size() != roles.size() * static_cast<std::size_t>(depth)) {
    throw Error("detokenize: " + std::to_string(primitive.size()) + " primitive ids, expected " +
                std::to_string(roles.size() * static_cast<std::size_t>(depth)));
  }
  TokenList tokens;
  tokens.layers = depth;
  tokens.indices.reserve(primitive.size());
  std::size_t pos = 0;
  for (const std::size_t c : group_major_order(roles)) {
    for (int l = 1; l <= depth; ++l) {
      const auto addr = artifact.layout.address(primitive[pos++]);
      if (addr.role != roles[c] || addr.layer != l) {
        throw Error("detokenize: id " + std::to_string(primitive[pos - 1]) +
                    " does not match the expected (group, layer) slot");
      }
      tokens.indices.push_back(addr.index);
    }
  }
  const Matrix controls = decode_chunk(artifact.codebooks, tokens, roles, layers);
  return reconstruct(controls, roles, artifact.config.spline, steps);
}

TokenizedTrajectory tokenize(const TokenizerArtifact& artifact, const Trajectory& traj) {
  // A single step yields no chunk; it is reported through dropped_steps.
  traj.validate(1);
  if (roles_of(traj.channels) != artifact.roles()) {
    throw Error("tokenize: trajectory '" + traj.id +
                "' channel roles do not match the tokenizer's channel layout");
  }
  const Matrix normalized = normalize(traj.values, artifact.stats_for(traj.embodiment));
  const ChunkPlan plan = plan_chunks(traj.steps(), artifact.config.horizon);

  TokenizedTrajectory out;
  out.traj_id = traj.id;
  out.embodiment = traj.embodiment;
  out.dropped_steps = plan.dropped_steps;
  for (const auto& span : plan.spans) {
    const Matrix block = normalized.middleRows(static_cast<Eigen::Index>(span.start),
                                               static_cast<Eigen::Index>(span.length));
    const TokenStream raw = encode_normalized_chunk(artifact, block);
    out.chunks.push_back({span.start, span.length, bpe_encode(artifact.merges, raw), raw.size()});
  }
  return out;
}

Matrix detokenize(const TokenizerArtifact& artifact, const TokenizedTrajectory& tokens,
                  int layers) {
  std::size_t rows = 0;
  for (const auto& c : tokens.chunks) rows += c.length;
  const NormStats& stats = artifact.stats_for(tokens.embodiment);
  Matrix normalized(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(artifact.channels.size()));
  Eigen::Index row = 0;
  for (const auto& c : tokens.chunks) {
    normalized.middleRows(row, static_cast<Eigen::Index>(c.length)) =
        decode_normalized_chunk(artifact, c.ids, static_cast<int>(c.length), layers);
    row += static_cast<Eigen::Index>(c.length);
  }
  return denormalize(normalized, stats);
}

Trajectory detokenize_trajectory(const TokenizerArtifact& artifact,
                                 const TokenizedTrajectory& tokens) {
  Trajectory traj;
  traj.id = tokens.traj_id;
  traj.embodiment = tokens.embodiment;
  traj.channels = artifact.channels;
  traj.values = detokenize(artifact, tokens);
  return traj;
}

PackedStream pack_stream(std::span<const std::vector<int>> visual,
                         std::span<const std::vector<int>> action) {
  if (visual.size() != action.size()) {
    throw Error("pack_stream: " + std::to_string(visual.size()) + " visual frames vs " +
                std::to_string(action.size()) + " action frames");
  }
  PackedStream out;
  for (std::size_t f = 0; f < visual.size(); ++f) {
    out.stream.insert(out.stream.end(), visual[f].begin(), visual[f].end());
    out.mask.append(visual[f].size(), static_cast<char>(StreamRole::visual));
    out.stream.insert(out.stream.end(), action[f].begin(), action[f].end());
    out.mask.append(action[f].size(), static_cast<char>(StreamRole::action));
  }
  return out;
}

std::vector<std::vector<int>> actions_per_frame(const TokenizedTrajectory& tokens,
                                                std::size_t frames) {
  std::vector<std::vector<int>> out(frames);
  for (const auto& c : tokens.chunks) {
    if (c.start >= frames) {
      throw Error("actions_per_frame: chunk starting at frame " + std::to_string(c.start) +
                  " lies beyond " + std::to_string(frames) + " frames");
    }
    out[c.start] = c.ids;
  }
  return out;
}

}  // namespace omnisat
