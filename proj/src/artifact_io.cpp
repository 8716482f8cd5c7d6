#include "omnisat/artifact_io.hpp"

#include <fstream>
#include <sstream>

namespace omnisat {

using nlohmann::json;

namespace {

json role_sizes_to_json(const std::array<int, kPartRoleCount>& sizes) {
  json j = json::object();
  for (int g = 0; g < kPartRoleCount; ++g) {
    j[std::string(to_string(static_cast<PartRole>(g)))] = sizes[g];
  }
  return j;
}

json norm_to_json(const NormStats& s) {
  json degenerate = json::array();
  for (const bool d : s.degenerate) degenerate.push_back(d);
  return {{"p1", s.p1}, {"p99", s.p99}, {"degenerate", degenerate}};
}

NormStats norm_from_json(const json& j) {
  NormStats s;
  s.p1 = j.at("p1").get<std::vector<double>>();
  s.p99 = j.at("p99").get<std::vector<double>>();
  for (const auto& d : j.at("degenerate")) s.degenerate.push_back(d.get<bool>());
  if (s.p99.size() != s.p1.size() || s.degenerate.size() != s.p1.size()) {
    throw Error("norm_stats arrays differ in length");
  }
  for (std::size_t c = 0; c < s.p1.size(); ++c) {
    if (s.p1[c] > s.p99[c]) throw Error("norm_stats: p1 > p99 for channel " + std::to_string(c));
  }
  return s;
}

json matrix_rows(const Matrix& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  }
  return flat;
}

Matrix matrix_from_rows(const json& j, Eigen::Index rows, Eigen::Index cols) {
  const auto flat = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) {
    throw Error("codeword array has " + std::to_string(flat.size()) + " values, expected " +
                std::to_string(rows * cols));
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

json loss_to_json(const LossReport& l) {
  return {{"recon", l.recon},           {"recon_repr", l.recon_repr}, {"recon_traj", l.recon_traj},
          {"commitment", l.commitment}, {"dropout", l.dropout},       {"total", l.total},
          {"samples", l.samples},       {"updates", l.updates},       {"reseeded", l.reseeded}};
}

LossReport loss_from_json(const json& j) {
  LossReport l;
  l.recon = j.value("recon", 0.0);
  l.recon_repr = j.value("recon_repr", 0.0);
  l.recon_traj = j.value("recon_traj", 0.0);
  l.commitment = j.value("commitment", 0.0);
  l.dropout = j.value("dropout", 0.0);
  l.total = j.value("total", 0.0);
  l.samples = j.value("samples", std::size_t{0});
  l.updates = j.value("updates", std::size_t{0});
  l.reseeded = j.value("reseeded", std::size_t{0});
  return l;
}

}  // namespace

json config_to_json(const TokenizerConfig& cfg) {
  return {{"horizon", cfg.horizon},
          {"spline",
           {{"degree_pos_rot", cfg.spline.degree_pos_rot},
            {"degree_grip", cfg.spline.degree_grip},
            {"n_control", cfg.spline.n_control},
            {"ridge_lambda", cfg.spline.ridge_lambda}}},
          {"rvq",
           {{"layers", cfg.rvq.layers},
            {"codebook_size", role_sizes_to_json(cfg.rvq.codebook_size)},
            {"decay", cfg.rvq.decay},
            {"drop_p", cfg.rvq.drop_p},
            {"gamma", cfg.rvq.gamma},
            {"lambda1", cfg.rvq.lambda1},
            {"lambda2", cfg.rvq.lambda2},
            {"reseed_threshold", cfg.rvq.reseed_threshold},
            {"epochs", cfg.rvq.epochs},
            {"batch_size", cfg.rvq.batch_size},
            {"null_codeword", cfg.rvq.null_codeword}}},
          {"bpe_merges", cfg.bpe_merges},
          {"per_embodiment_stats", cfg.per_embodiment_stats}};
}

TokenizerConfig config_from_json(const json& j) {
  try {
    TokenizerConfig cfg = TokenizerConfig::preset(j.value("preset", std::string("omnisat8")));
    cfg.horizon = j.value("horizon", cfg.horizon);
    cfg.bpe_merges = j.value("bpe_merges", cfg.bpe_merges);
    cfg.per_embodiment_stats = j.value("per_embodiment_stats", cfg.per_embodiment_stats);
    if (const auto it = j.find("spline"); it != j.end()) {
      auto& s = cfg.spline;
      s.degree_pos_rot = it->value("degree_pos_rot", s.degree_pos_rot);
      s.degree_grip = it->value("degree_grip", s.degree_grip);
      s.n_control = it->value("n_control", s.n_control);
      s.ridge_lambda = it->value("ridge_lambda", s.ridge_lambda);
    }
    if (const auto it = j.find("rvq"); it != j.end()) {
      auto& r = cfg.rvq;
      r.layers = it->value("layers", r.layers);
      if (const auto k = it->find("codebook_size"); k != it->end()) {
        for (int g = 0; g < kPartRoleCount; ++g) {
          const auto name = std::string(to_string(static_cast<PartRole>(g)));
          r.codebook_size[g] = k->value(name, r.codebook_size[g]);
        }
      }
      r.decay = it->value("decay", r.decay);
      r.drop_p = it->value("drop_p", r.drop_p);
      r.gamma = it->value("gamma", r.gamma);
      r.lambda1 = it->value("lambda1", r.lambda1);
      r.lambda2 = it->value("lambda2", r.lambda2);
      r.reseed_threshold = it->value("reseed_threshold", r.reseed_threshold);
      r.epochs = it->value("epochs", r.epochs);
      r.batch_size = it->value("batch_size", r.batch_size);
      r.null_codeword = it->value("null_codeword", r.null_codeword);
    }
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed tokenizer config: ") + e.what());
  }
}

TokenizerConfig read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path);
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error("config " + path + ": " + e.what());
  }
}

json artifact_to_json(const TokenizerArtifact& a) {
  json channels = json::array();
  for (const auto& c : a.channels) {
    channels.push_back({{"name", c.name}, {"role", std::string(to_string(c.role))}});
  }
  json norm = norm_to_json(a.norm);
  if (!a.embodiment_norm.empty()) {
    json per = json::object();
    for (const auto& [name, stats] : a.embodiment_norm) per[name] = norm_to_json(stats);
    norm["per_embodiment"] = per;
  }

  json groups = json::array();
  for (const auto& g : a.layout.groups()) {
    groups.push_back({{"role", std::string(to_string(g.role))}, {"offset", g.offset}, {"size", g.size}});
  }

  json books = json::array();
  for (const auto& book : a.codebooks.books) {
    if (!book) continue;
    json layers = json::array();
    for (int l = 0; l < book->layers(); ++l) {
      layers.push_back({{"codewords", matrix_rows(book->codewords[l])},
                        {"ema_counts", std::vector<double>(book->ema_counts[l].data(),
                                                           book->ema_counts[l].data() +
                                                               book->ema_counts[l].size())},
                        {"ema_sums", matrix_rows(book->ema_sums[l])}});
    }
    books.push_back({{"group", std::string(to_string(book->group))},
                     {"size", book->size()},
                     {"dim", book->dim()},
                     {"decay", book->decay},
                     {"null_slot", book->null_slot},
                     {"layers", std::move(layers)}});
  }

  json merges = json::array();
  for (const auto& m : a.merges.merges()) merges.push_back({m.left, m.right, m.id});

  json losses = json::array();
  for (const auto& l : a.metadata.epoch_losses) losses.push_back(loss_to_json(l));

  return {{"version", TokenizerArtifact::kVersion},
          {"config", config_to_json(a.config)},
          {"channels", std::move(channels)},
          {"norm_stats", std::move(norm)},
          {"spline",
           {{"degree_pos_rot", a.config.spline.degree_pos_rot},
            {"degree_grip", a.config.spline.degree_grip},
            {"n_control", a.config.spline.n_control},
            {"ridge_lambda", a.config.spline.ridge_lambda}}},
          {"layout",
           {{"layers", a.layout.layers()}, {"base_vocab", a.layout.base_vocab()}, {"groups", groups}}},
          {"codebooks", std::move(books)},
          {"bpe", {{"base_vocab", a.merges.base_vocab()}, {"max_vocab", a.merges.max_vocab()}}},
          {"bpe_merges", std::move(merges)},
          {"metadata",
           {{"seed", a.metadata.seed},
            {"epochs", a.metadata.epochs},
            {"corpus_fingerprint", a.metadata.corpus_fingerprint},
            {"trajectories", a.metadata.trajectories},
            {"chunks", a.metadata.chunks},
            {"dropped_steps", a.metadata.dropped_steps},
            {"epoch_losses", std::move(losses)}}}};
}

TokenizerArtifact artifact_from_json(const json& j) {
  TokenizerArtifact a;
  try {
    const auto version = j.at("version").get<std::string>();
    if (version != TokenizerArtifact::kVersion) {
      throw Error("unsupported artifact version '" + version + "'");
    }
    a.config = config_from_json(j.at("config"));
    for (const auto& c : j.at("channels")) {
      a.channels.push_back(
          {c.at("name").get<std::string>(), part_role_from_string(c.at("role").get<std::string>())});
    }
    const auto& norm = j.at("norm_stats");
    a.norm = norm_from_json(norm);
    if (a.norm.channels() != a.channels.size()) throw Error("norm_stats do not match channels");
    if (const auto it = norm.find("per_embodiment"); it != norm.end()) {
      for (const auto& [name, stats] : it->items()) a.embodiment_norm.emplace(name, norm_from_json(stats));
    }

    const auto& layout = j.at("layout");
    std::vector<GroupSlot> groups;
    for (const auto& g : layout.at("groups")) {
      groups.push_back({part_role_from_string(g.at("role").get<std::string>()),
                        g.at("offset").get<int>(), g.at("size").get<int>()});
    }
    a.layout = TokenLayout(layout.at("layers").get<int>(), std::move(groups));
    if (a.layout.base_vocab() != layout.value("base_vocab", a.layout.base_vocab())) {
      throw Error("layout base_vocab does not match its groups");
    }

    for (const auto& b : j.at("codebooks")) {
      const auto role = part_role_from_string(b.at("group").get<std::string>());
      const int size = b.at("size").get<int>();
      const int dim = b.at("dim").get<int>();
      if (size != a.layout.slot(role).size) throw Error("codebook size does not match layout");
      if (dim != a.config.spline.n_control) throw Error("codeword dimension != n_control");
      Codebook book;
      book.group = role;
      book.decay = b.at("decay").get<double>();
      book.null_slot = b.value("null_slot", true);
      for (const auto& layer : b.at("layers")) {
        book.codewords.push_back(matrix_from_rows(layer.at("codewords"), size, dim));
        const auto counts = layer.at("ema_counts").get<std::vector<double>>();
        if (static_cast<int>(counts.size()) != size) throw Error("ema_counts length mismatch");
        book.ema_counts.push_back(Eigen::Map<const Vector>(counts.data(), size));
        book.ema_sums.push_back(matrix_from_rows(layer.at("ema_sums"), size, dim));
        if (!book.codewords.back().allFinite()) throw Error("non-finite codeword");
      }
      if (book.layers() != a.layout.layers()) throw Error("codebook depth does not match layout");
      a.codebooks.books[static_cast<int>(role)] = std::move(book);
    }
    for (const auto& g : a.layout.groups()) {
      if (!a.codebooks.has(g.role)) throw Error("layout group without codebook");
    }

    std::vector<Merge> merges;
    for (const auto& m : j.at("bpe_merges")) {
      merges.push_back({m.at(0).get<int>(), m.at(1).get<int>(), m.at(2).get<int>()});
    }
    const auto& bpe = j.at("bpe");
    const int base = bpe.at("base_vocab").get<int>();
    if (base != a.layout.base_vocab()) throw Error("BPE base vocabulary does not match layout");
    a.merges = MergeTable(base, bpe.at("max_vocab").get<int>(), std::move(merges));

    const auto& meta = j.at("metadata");
    a.metadata.seed = meta.value("seed", std::uint64_t{0});
    a.metadata.epochs = meta.value("epochs", 0);
    a.metadata.corpus_fingerprint = meta.value("corpus_fingerprint", std::string{});
    a.metadata.trajectories = meta.value("trajectories", std::size_t{0});
    a.metadata.chunks = meta.value("chunks", std::size_t{0});
    a.metadata.dropped_steps = meta.value("dropped_steps", std::size_t{0});
    if (const auto it = meta.find("epoch_losses"); it != meta.end()) {
      for (const auto& l : *it) a.metadata.epoch_losses.push_back(loss_from_json(l));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed artifact: ") + e.what());
  }
  return a;
}

std::string dump_artifact(const TokenizerArtifact& artifact) {
  return artifact_to_json(artifact).dump(1) + "\n";
}

void write_artifact_file(const std::string& path, const TokenizerArtifact& artifact) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write artifact " + path);
  out << dump_artifact(artifact);
}

TokenizerArtifact read_artifact_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open artifact " + path);
  try {
    return artifact_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error("artifact " + path + ": " + e.what());
  }
}

json tokens_to_json(const TokenizedTrajectory& t) {
  json chunks = json::array();
  for (const auto& c : t.chunks) {
    chunks.push_back({{"start", c.start}, {"len", c.length}, {"ids", c.ids}, {"pre_bpe", c.pre_bpe}});
  }
  return {{"traj_id", t.traj_id},
          {"embodiment", t.embodiment},
          {"dropped_steps", t.dropped_steps},
          {"chunks", std::move(chunks)}};
}

TokenizedTrajectory tokens_from_json(const json& j) {
  TokenizedTrajectory t;
  try {
    t.traj_id = j.at("traj_id").get<std::string>();
    t.embodiment = j.value("embodiment", std::string{});
    t.dropped_steps = j.value("dropped_steps", std::size_t{0});
    for (const auto& c : j.at("chunks")) {
      TokenizedChunk chunk;
      chunk.start = c.at("start").get<std::size_t>();
      chunk.length = c.at("len").get<std::size_t>();
      chunk.ids = c.at("ids").get<std::vector<int>>();
      chunk.pre_bpe = c.value("pre_bpe", std::size_t{0});
      if (chunk.length < 2) throw Error("token record chunk shorter than 2 steps");
      t.chunks.push_back(std::move(chunk));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed token record: ") + e.what());
  }
  return t;
}

void write_tokens_file(const std::string& path, const std::vector<TokenizedTrajectory>& tokens) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write token file " + path);
  for (const auto& t : tokens) out << tokens_to_json(t).dump() << '\n';
}

std::vector<TokenizedTrajectory> read_tokens_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open token file " + path);
  std::vector<TokenizedTrajectory> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(tokens_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw Error("token file " + path + ": " + e.what());
    }
  }
  return out;
}

json packed_to_json(const PackedFrames& frames) {
  const auto packed = pack_stream(frames.visual, frames.action);
  json list = json::array();
  for (std::size_t f = 0; f < frames.visual.size(); ++f) {
    list.push_back({{"visual", frames.visual[f]}, {"action", frames.action[f]}});
  }
  return {{"frames", std::move(list)}, {"stream", packed.stream}, {"mask", packed.mask}};
}

PackedFrames packed_frames_from_json(const json& j) {
  PackedFrames frames;
  try {
    for (const auto& f : j.at("frames")) {
      frames.visual.push_back(f.at("visual").get<std::vector<int>>());
      frames.action.push_back(f.at("action").get<std::vector<int>>());
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed packed stream: ") + e.what());
  }
  return frames;
}

}  // namespace omnisat
