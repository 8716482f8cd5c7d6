#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "omnisat/artifact_io.hpp"
#include "omnisat/baselines.hpp"
#include "omnisat/corpus_io.hpp"
#include "omnisat/eval.hpp"
#include "omnisat/synthetic.hpp"
#include "omnisat/tokenizer.hpp"

namespace {

using nlohmann::json;
using namespace omnisat;

void write_json(const std::string& path, const json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(path + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Action trajectory tokenizer: fit, encode, decode and evaluate"};
  app.require_subcommand(1);

  std::string corpus_path, config_path, preset = "omnisat8", artifact_path, out_path, tokens_path;
  std::uint64_t seed = 0;

  auto* fit_cmd = app.add_subcommand("fit", "Fit a tokenizer artifact on a corpus");
  fit_cmd->add_option("--corpus", corpus_path, "Trajectory corpus (JSONL)")->required();
  fit_cmd->add_option("--config", config_path, "Tokenizer config (JSON)");
  fit_cmd->add_option("--preset", preset, "omnisat6, omnisat8 or omnisat10 when no --config");
  fit_cmd->add_option("--seed", seed, "Training seed");
  fit_cmd->add_option("--out", out_path, "Artifact path")->required();

  auto* encode_cmd = app.add_subcommand("encode", "Tokenize a corpus");
  encode_cmd->add_option("--artifact", artifact_path)->required();
  encode_cmd->add_option("--corpus", corpus_path)->required();
  encode_cmd->add_option("--out", out_path, "Token file (JSONL)")->required();

  int layers = -1;
  auto* decode_cmd = app.add_subcommand("decode", "Reconstruct trajectories from tokens");
  decode_cmd->add_option("--artifact", artifact_path)->required();
  decode_cmd->add_option("--tokens", tokens_path)->required();
  decode_cmd->add_option("--out", out_path, "Trajectory corpus (JSONL)")->required();
  decode_cmd->add_option("--layers", layers, "Decode only the first L layers");

  std::string baseline, train_path;
  int bins = 256;
  double step = 1e-3;
  int fast_merges = 1024;
  bool timing = false;
  auto* eval_cmd = app.add_subcommand("eval", "Report MAE and compression ratio");
  eval_cmd->add_option("--artifact", artifact_path, "Required unless --baseline is given");
  eval_cmd->add_option("--corpus", corpus_path)->required();
  eval_cmd->add_option("--baseline", baseline)->check(CLI::IsMember({"binning", "beast", "fast"}));
  eval_cmd->add_option("--train", train_path, "Baseline training corpus (default: --corpus)");
  eval_cmd->add_option("--bins", bins, "Bins for binning and beast");
  eval_cmd->add_option("--step", step, "DCT quantization step for fast");
  eval_cmd->add_option("--fast-merges", fast_merges, "BPE merges for fast");
  eval_cmd->add_option("--layers", layers, "Decode only the first L layers");
  eval_cmd->add_flag("--timing", timing, "Include wall-clock runtime in the report");
  eval_cmd->add_option("--out", out_path, "Report path (default: stdout)");

  std::string grid_path;
  auto* sweep_cmd = app.add_subcommand("sweep", "Fit and evaluate a grid of configurations");
  sweep_cmd->add_option("--grid", grid_path)->required();
  sweep_cmd->add_option("--corpus", corpus_path)->required();
  sweep_cmd->add_option("--seed", seed);
  sweep_cmd->add_option("--out", out_path, "Output directory")->required();

  auto* inspect_cmd = app.add_subcommand("inspect", "Summarize an artifact and its codebook usage");
  inspect_cmd->add_option("--artifact", artifact_path)->required();
  inspect_cmd->add_option("--corpus", corpus_path, "Measure usage on this corpus");

  std::size_t chunks = 1000;
  double noise = -1.0;
  std::string gen_preset = "sinusoid";
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic corpus");
  gen_cmd->add_option("--preset", gen_preset)->check(CLI::IsMember({"sinusoid", "sinusoid-motif"}));
  gen_cmd->add_option("--chunks", chunks, "Trajectories of one chunk each");
  gen_cmd->add_option("--seed", seed);
  gen_cmd->add_option("--noise", noise, "Override the additive noise sigma");
  gen_cmd->add_option("--out", out_path)->required();

  std::string visual_path;
  auto* pack_cmd = app.add_subcommand("pack", "Interleave visual and action tokens per frame");
  pack_cmd->add_option("--tokens", tokens_path)->required();
  pack_cmd->add_option("--visual", visual_path,
                       "JSONL of {\"traj_id\", \"frames\": [[ids], ...]}")->required();
  pack_cmd->add_option("--out", out_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit_cmd) {
      const auto corpus = read_corpus_file(corpus_path);
      const TokenizerConfig cfg =
          config_path.empty() ? TokenizerConfig::preset(preset) : read_config_file(config_path);
      write_artifact_file(out_path, fit(corpus, cfg, seed));
    } else if (*encode_cmd) {
      const auto art = read_artifact_file(artifact_path);
      std::vector<TokenizedTrajectory> tokens;
      for (const auto& traj : read_corpus_file(corpus_path)) tokens.push_back(tokenize(art, traj));
      write_tokens_file(out_path, tokens);
    } else if (*decode_cmd) {
      const auto art = read_artifact_file(artifact_path);
      std::vector<Trajectory> out;
      for (const auto& t : read_tokens_file(tokens_path)) {
        Trajectory traj = detokenize_trajectory(art, t);
        if (layers >= 0) traj.values = detokenize(art, t, layers);
        out.push_back(std::move(traj));
      }
      write_corpus_file(out_path, out);
    } else if (*eval_cmd) {
      const auto corpus = read_corpus_file(corpus_path);
      std::unique_ptr<ChunkTokenizer> tok;
      int horizon = kDefaultHorizon;
      std::shared_ptr<const TokenizerArtifact> art;
      if (!artifact_path.empty()) {
        art = std::make_shared<const TokenizerArtifact>(read_artifact_file(artifact_path));
        horizon = art->config.horizon;
      }
      if (baseline.empty()) {
        if (!art) throw Error("eval: --artifact is required without --baseline");
        tok = std::make_unique<OmniSatTokenizer>(art, layers);
      } else {
        const auto train = train_path.empty() ? corpus : read_corpus_file(train_path);
        if (baseline == "binning") {
          tok = make_binning(train, BinningConfig{bins}, horizon);
        } else if (baseline == "beast") {
          BeastConfig cfg;
          if (art) cfg.spline = art->config.spline;
          cfg.bins = bins;
          tok = make_beast(train, cfg, horizon);
        } else {
          tok = make_fast(train, FastConfig{step, fast_merges}, horizon);
        }
      }
      write_json(out_path, report_to_json(evaluate(*tok, corpus, EvalOptions{timing, true})));
    } else if (*sweep_cmd) {
      const auto grid = grid_from_json(read_json(grid_path));
      const auto rows = sweep(grid, read_corpus_file(corpus_path), seed);
      std::filesystem::create_directories(out_path);
      write_json((std::filesystem::path(out_path) / "sweep.json").string(), sweep_to_json(rows));
      std::ofstream csv(std::filesystem::path(out_path) / "frontier.csv");
      if (!csv) throw Error("cannot write frontier.csv in " + out_path);
      csv << sweep_to_csv(rows);
      for (const auto& r : rows) {
        if (!r.error.empty()) std::cerr << "cell " << r.name << " failed: " << r.error << '\n';
      }
    } else if (*inspect_cmd) {
      const auto art = std::make_shared<const TokenizerArtifact>(read_artifact_file(artifact_path));
      json out = {{"version", TokenizerArtifact::kVersion},
                  {"config", config_to_json(art->config)},
                  {"channels", art->channels.size()},
                  {"layers", art->layout.layers()},
                  {"base_vocab", art->layout.base_vocab()},
                  {"vocab_size", art->merges.vocab_size()},
                  {"merges", art->merges.merges().size()},
                  {"corpus_fingerprint", art->metadata.corpus_fingerprint},
                  {"chunks", art->metadata.chunks}};
      json ema = json::array();
      for (const auto& book : art->codebooks.books) {
        if (!book) continue;
        for (int l = 0; l < book->layers(); ++l) {
          const auto& counts = book->ema_counts[static_cast<std::size_t>(l)];
          int live = 0;
          for (Eigen::Index k = 0; k < counts.size(); ++k) {
            if (!book->pinned(static_cast<int>(k)) && counts[k] >= art->config.rvq.reseed_threshold) ++live;
          }
          ema.push_back({{"group", std::string(to_string(book->group))}, {"layer", l + 1}, {"live", live}});
        }
      }
      out["ema_live_codewords"] = ema;
      if (!corpus_path.empty()) {
        const auto report = evaluate(OmniSatTokenizer(art), read_corpus_file(corpus_path));
        out["utilization"] = utilization_to_json(report.utilization);
      }
      write_json("-", out);
    } else if (*gen_cmd) {
      SyntheticConfig cfg = synthetic_preset(gen_preset, chunks);
      if (noise >= 0.0) cfg.noise = noise;
      write_corpus_file(out_path, generate_synthetic(cfg, seed));
    } else if (*pack_cmd) {
      std::map<std::string, std::vector<std::vector<int>>> visual;
      std::ifstream in(visual_path);
      if (!in) throw Error("cannot open " + visual_path);
      std::string line;
      while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto j = json::parse(line);
        visual[j.at("traj_id").get<std::string>()] = j.at("frames").get<std::vector<std::vector<int>>>();
      }
      std::ofstream out(out_path);
      if (!out) throw Error("cannot write " + out_path);
      for (const auto& t : read_tokens_file(tokens_path)) {
        const auto it = visual.find(t.traj_id);
        if (it == visual.end()) throw Error("pack: no visual frames for '" + t.traj_id + "'");
        PackedFrames frames{it->second, actions_per_frame(t, it->second.size())};
        json rec = packed_to_json(frames);
        rec["traj_id"] = t.traj_id;
        out << rec.dump() << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
