#include "omnisat/eval.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "omnisat/artifact_io.hpp"
#include "omnisat/random.hpp"

namespace omnisat {

using nlohmann::json;

namespace {

constexpr std::uint64_t kSplitStream = 21;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string kind_name(TokenizerKind kind) {
  switch (kind) {
    case TokenizerKind::omnisat: return "omnisat";
    case TokenizerKind::binning: return "binning";
    case TokenizerKind::beast: return "beast";
    case TokenizerKind::fast: return "fast";
  }
  return "?";
}

TokenizerKind kind_from_name(const std::string& name) {
  if (name == "omnisat") return TokenizerKind::omnisat;
  if (name == "binning") return TokenizerKind::binning;
  if (name == "beast") return TokenizerKind::beast;
  if (name == "fast") return TokenizerKind::fast;
  throw Error("unknown tokenizer '" + name + "' (omnisat, binning, beast, fast)");
}

SweepCell cell_from_json(const json& j, const json& base) {
  SweepCell cell;
  cell.kind = kind_from_name(j.value("tokenizer", std::string("omnisat")));
  json merged = base;
  if (const auto it = j.find("config"); it != j.end()) merged.merge_patch(*it);
  cell.config = config_from_json(merged);
  if (const auto it = j.find("layers"); it != j.end()) {
    cell.config.rvq.layers = it->get<int>();
    cell.config.validate();
  }
  cell.binning.bins = j.value("bins", cell.binning.bins);
  cell.beast.spline = cell.config.spline;
  cell.beast.bins = j.value("bins", cell.beast.bins);
  cell.fast.step = j.value("step", cell.fast.step);
  cell.fast.bpe_merges = j.value("bpe_merges", cell.fast.bpe_merges);
  cell.name = j.value("name", std::string{});
  if (cell.name.empty()) {
    cell.name = cell.kind == TokenizerKind::omnisat
                    ? "omnisat-" + std::to_string(cell.config.rvq.layers)
                    : kind_name(cell.kind);
  }
  return cell;
}

}  // namespace

double mae(const Matrix& original, const Matrix& reconstructed) {
  if (original.rows() != reconstructed.rows() || original.cols() != reconstructed.cols()) {
    throw Error("mae: shape mismatch " + std::to_string(original.rows()) + "x" +
                std::to_string(original.cols()) + " vs " + std::to_string(reconstructed.rows()) +
                "x" + std::to_string(reconstructed.cols()));
  }
  if (original.size() == 0) throw Error("mae: empty input");
  return (original - reconstructed).cwiseAbs().sum() / static_cast<double>(original.size());
}

RatioReport compression_ratio(std::size_t scalar_slots, std::size_t steps, std::size_t pre_bpe,
                              std::size_t post_bpe) {
  if (post_bpe == 0 || pre_bpe == 0) throw Error("compression_ratio: zero tokens");
  if (post_bpe > pre_bpe) throw Error("compression_ratio: more ids after BPE than before");
  RatioReport r;
  r.scalar_slots = scalar_slots;
  r.steps = steps;
  r.pre_bpe = pre_bpe;
  r.post_bpe = post_bpe;
  r.ratio = static_cast<double>(scalar_slots) / static_cast<double>(post_bpe);
  r.pre_ratio = static_cast<double>(scalar_slots) / static_cast<double>(pre_bpe);
  r.bpe_gain = static_cast<double>(pre_bpe) / static_cast<double>(post_bpe);
  r.steps_per_token = static_cast<double>(steps) / static_cast<double>(post_bpe);
  return r;
}

RatioReport compression_ratio(std::span<const TokenizedTrajectory> tokens, std::size_t dof) {
  std::size_t steps = 0, pre = 0, post = 0;
  for (const auto& t : tokens) {
    for (const auto& c : t.chunks) {
      steps += c.length;
      pre += c.pre_bpe;
      post += c.ids.size();
    }
  }
  return compression_ratio(steps * dof, steps, pre, post);
}

EvalReport evaluate(const ChunkTokenizer& tokenizer, std::span<const Trajectory> corpus,
                    const EvalOptions& options) {
  if (corpus.empty()) throw Error("evaluate: empty corpus");
  const auto* omni = dynamic_cast<const OmniSatTokenizer*>(&tokenizer);

  EvalReport report;
  report.tokenizer = tokenizer.name();
  report.trajectories = corpus.size();

  std::array<double, kPartRoleCount> group_sum{};
  std::array<std::size_t, kPartRoleCount> group_n{};
  std::size_t steps = 0, slots = 0, pre = 0, post = 0;
  double mae_sum = 0.0;
  double encode_s = 0.0, decode_s = 0.0;
  std::vector<TokenList> lists;

  std::size_t evaluated = 0;
  for (const auto& traj : corpus) {
    traj.validate(1);
    const NormStats& stats = tokenizer.stats_for(traj);
    if (stats.channels() != traj.dof()) {
      throw Error("evaluate: trajectory '" + traj.id + "' has " + std::to_string(traj.dof()) +
                  " channels, tokenizer expects " + std::to_string(stats.channels()));
    }
    const Matrix normalized = normalize(traj.values, stats);
    const ChunkPlan plan = plan_chunks(traj.steps(), tokenizer.horizon());
    report.dropped_steps += plan.dropped_steps;
    if (plan.spans.empty()) continue;

    std::size_t covered = 0;
    for (const auto& s : plan.spans) covered += s.length;
    Matrix recon(static_cast<Eigen::Index>(covered), normalized.cols());
    for (const auto& span : plan.spans) {
      const auto start = static_cast<Eigen::Index>(span.start);
      const auto len = static_cast<Eigen::Index>(span.length);
      const Matrix block = normalized.middleRows(start, len);

      auto t0 = std::chrono::steady_clock::now();
      const EncodedChunk enc = tokenizer.encode(block);
      encode_s += seconds_since(t0);
      t0 = std::chrono::steady_clock::now();
      recon.middleRows(start, len) = tokenizer.decode(enc.ids, static_cast<int>(span.length));
      decode_s += seconds_since(t0);

      ++report.chunks;
      report.clamped += enc.clamped;
      ++report.length_histogram[enc.ids.size()];
      steps += span.length;
      slots += span.length * traj.dof();
      pre += enc.pre_bpe;
      post += enc.ids.size();

      if (omni && options.utilization) {
        const auto roles = omni->artifact().roles();
        const Matrix controls = fit_control_points(block, roles, omni->artifact().config.spline);
        lists.push_back(encode_chunk(omni->artifact().codebooks, controls, roles));
      }
    }

    const Matrix original = traj.values.topRows(static_cast<Eigen::Index>(covered));
    const Matrix restored = denormalize(recon, stats);
    mae_sum += mae(original, restored);
    ++evaluated;
    const auto roles = roles_of(traj.channels);
    for (int g = 0; g < kPartRoleCount; ++g) {
      double sum = 0.0;
      std::size_t cols = 0;
      for (std::size_t c = 0; c < roles.size(); ++c) {
        if (static_cast<int>(roles[c]) != g) continue;
        const auto ci = static_cast<Eigen::Index>(c);
        sum += (original.col(ci) - restored.col(ci)).cwiseAbs().sum();
        ++cols;
      }
      if (cols == 0) continue;
      group_sum[g] += sum / static_cast<double>(cols * covered);
      ++group_n[g];
    }
  }
  if (report.chunks == 0) throw Error("evaluate: corpus yields no chunks");

  report.mae = mae_sum / static_cast<double>(evaluated);
  for (int g = 0; g < kPartRoleCount; ++g) {
    if (group_n[g] > 0) report.group_mae[g] = group_sum[g] / static_cast<double>(group_n[g]);
  }
  report.ratio = compression_ratio(slots, steps, pre, post);
  if (omni && options.utilization) {
    report.utilization = utilization_stats(omni->artifact().codebooks, lists, omni->artifact().roles());
  }
  if (options.timing) {
    report.runtime = RuntimeStats{encode_s, decode_s,
                                  static_cast<double>(report.chunks) / std::max(encode_s + decode_s, 1e-12)};
  }
  return report;
}

json utilization_to_json(std::span<const LayerUsage> usage) {
  json out = json::array();
  for (const auto& u : usage) {
    const auto used = static_cast<int>(u.histogram.size()) - u.dead;
    out.push_back({{"group", std::string(to_string(u.group))},
                   {"layer", u.layer},
                   {"assignments", u.assignments},
                   {"used", used},
                   {"dead", u.dead},
                   {"perplexity", u.perplexity}});
  }
  return out;
}

json report_to_json(const EvalReport& r) {
  json groups = json::object();
  for (int g = 0; g < kPartRoleCount; ++g) {
    if (r.group_mae[g]) groups[std::string(to_string(static_cast<PartRole>(g)))] = *r.group_mae[g];
  }
  json hist = json::array();
  for (const auto& [len, n] : r.length_histogram) hist.push_back({len, n});
  json out = {{"tokenizer", r.tokenizer},
              {"trajectories", r.trajectories},
              {"chunks", r.chunks},
              {"dropped_steps", r.dropped_steps},
              {"clamped", r.clamped},
              {"mae", r.mae},
              {"group_mae", groups},
              {"scalar_slots", r.ratio.scalar_slots},
              {"pre_bpe_tokens", r.ratio.pre_bpe},
              {"post_bpe_tokens", r.ratio.post_bpe},
              {"ratio", r.ratio.ratio},
              {"pre_bpe_ratio", r.ratio.pre_ratio},
              {"bpe_gain", r.ratio.bpe_gain},
              {"steps_per_token", r.ratio.steps_per_token},
              {"length_histogram", hist}};
  if (!r.utilization.empty()) out["utilization"] = utilization_to_json(r.utilization);
  if (r.runtime) {
    out["runtime"] = {{"encode_seconds", r.runtime->encode_seconds},
                      {"decode_seconds", r.runtime->decode_seconds},
                      {"chunks_per_second", r.runtime->chunks_per_second}};
  }
  return out;
}

Split train_test_split(std::size_t n, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error("train_test_split: train_fraction must lie in (0, 1)");
  }
  if (n < 2) throw Error("train_test_split: need at least 2 trajectories");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {kSplitStream}));
  shuffle(order.begin(), order.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

SweepGrid grid_from_json(const json& j) {
  SweepGrid grid;
  try {
    grid.train_fraction = j.value("train_fraction", grid.train_fraction);
    const json base = j.value("base", json::object());
    if (const auto it = j.find("layers"); it != j.end()) {
      for (const auto& l : *it) grid.cells.push_back(cell_from_json({{"layers", l}}, base));
    }
    if (const auto it = j.find("cells"); it != j.end()) {
      for (const auto& c : *it) grid.cells.push_back(cell_from_json(c, base));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed sweep grid: ") + e.what());
  }
  if (grid.cells.empty()) throw Error("sweep grid has no cells");
  return grid;
}

std::vector<SweepRow> sweep(const SweepGrid& grid, std::span<const Trajectory> corpus,
                            std::uint64_t seed) {
  if (grid.cells.empty()) throw Error("sweep: empty grid");
  const Split split = train_test_split(corpus.size(), grid.train_fraction, seed);
  std::vector<Trajectory> train, test;
  for (const auto i : split.train) train.push_back(corpus[i]);
  for (const auto i : split.test) test.push_back(corpus[i]);

  std::vector<SweepRow> rows;
  for (const auto& cell : grid.cells) {
    SweepRow row;
    row.name = cell.name;
    row.tokenizer = kind_name(cell.kind);
    try {
      std::unique_ptr<ChunkTokenizer> tok;
      switch (cell.kind) {
        case TokenizerKind::omnisat:
          row.layers = cell.config.rvq.layers;
          tok = std::make_unique<OmniSatTokenizer>(
              std::make_shared<const TokenizerArtifact>(fit(train, cell.config, seed)));
          break;
        case TokenizerKind::binning:
          tok = make_binning(train, cell.binning, cell.config.horizon);
          break;
        case TokenizerKind::beast:
          tok = make_beast(train, cell.beast, cell.config.horizon);
          break;
        case TokenizerKind::fast:
          tok = make_fast(train, cell.fast, cell.config.horizon);
          break;
      }
      row.report = evaluate(*tok, test);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

json sweep_to_json(std::span<const SweepRow> rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json row = {{"name", r.name}, {"tokenizer", r.tokenizer}, {"layers", r.layers}};
    if (r.report) row["report"] = report_to_json(*r.report);
    if (!r.error.empty()) row["error"] = r.error;
    out.push_back(std::move(row));
  }
  return out;
}

std::string sweep_to_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out.precision(17);
  out << "name,tokenizer,layers,mae,ratio,pre_ratio,bpe_gain,error\n";
  for (const auto& r : rows) {
    out << r.name << ',' << r.tokenizer << ',' << r.layers << ',';
    if (r.report) {
      out << r.report->mae << ',' << r.report->ratio.ratio << ',' << r.report->ratio.pre_ratio << ','
          << r.report->ratio.bpe_gain << ',';
    } else {
      out << ",,,,";
    }
    std::string err = r.error;
    for (auto& ch : err) {
      if (ch == ',' || ch == '\n') ch = ' ';
    }
    out << err << '\n';
  }
  return out.str();
}

}  // namespace omnisat
