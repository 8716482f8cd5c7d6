#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "omnisat/baselines.hpp"
#include "omnisat/tokenizer.hpp"

namespace omnisat {

/// Mean absolute difference over all entries; throws on shape mismatch.
double mae(const Matrix& original, const Matrix& reconstructed);

struct RatioReport {
  std::size_t scalar_slots = 0;  // sum over chunks of T_e * d
  std::size_t steps = 0;         // sum over chunks of T_e
  std::size_t pre_bpe = 0;
  std::size_t post_bpe = 0;
  double ratio = 0.0;            // scalar_slots / post_bpe
  double pre_ratio = 0.0;        // scalar_slots / pre_bpe
  double bpe_gain = 0.0;         // pre_bpe / post_bpe
  double steps_per_token = 0.0;  // steps / post_bpe
};

RatioReport compression_ratio(std::size_t scalar_slots, std::size_t steps, std::size_t pre_bpe,
                              std::size_t post_bpe);
RatioReport compression_ratio(std::span<const TokenizedTrajectory> tokens, std::size_t dof);

struct RuntimeStats {
  double encode_seconds = 0.0;
  double decode_seconds = 0.0;
  double chunks_per_second = 0.0;
};

struct EvalReport {
  std::string tokenizer;
  std::size_t trajectories = 0;
  std::size_t chunks = 0;
  std::size_t dropped_steps = 0;
  std::size_t clamped = 0;
  double mae = 0.0;  // original units, mean over trajectories
  std::array<std::optional<double>, kPartRoleCount> group_mae;
  RatioReport ratio;
  std::map<std::size_t, std::size_t> length_histogram;  // post-BPE ids per chunk -> chunks
  std::vector<LayerUsage> utilization;                  // OmniSAT only
  std::optional<RuntimeStats> runtime;
};

struct EvalOptions {
  bool timing = false;  // wall-clock numbers make reports differ between runs
  bool utilization = true;
};

EvalReport evaluate(const ChunkTokenizer& tokenizer, std::span<const Trajectory> corpus,
                    const EvalOptions& options = {});

nlohmann::json utilization_to_json(std::span<const LayerUsage> usage);
nlohmann::json report_to_json(const EvalReport& report);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded shuffle of the corpus order; both parts keep ascending corpus order.
Split train_test_split(std::size_t n, double train_fraction, std::uint64_t seed);

enum class TokenizerKind { omnisat, binning, beast, fast };

struct SweepCell {
  std::string name;
  TokenizerKind kind = TokenizerKind::omnisat;
  TokenizerConfig config;
  BinningConfig binning;
  BeastConfig beast;
  FastConfig fast;
};

struct SweepGrid {
  std::vector<SweepCell> cells;
  double train_fraction = 0.9;
};

/// {"train_fraction": 0.9, "base": {config}, "layers": [6, 8, 10],
///  "cells": [{"name": ..., "tokenizer": "omnisat|binning|beast|fast", ...}]}
SweepGrid grid_from_json(const nlohmann::json& j);

struct SweepRow {
  std::string name;
  std::string tokenizer;
  int layers = 0;  // OmniSAT depth, 0 for baselines
  std::optional<EvalReport> report;
  std::string error;
};

/// Each cell is fitted on the train part and evaluated on the test part; a
/// failing cell records its error and the sweep continues.
std::vector<SweepRow> sweep(const SweepGrid& grid, std::span<const Trajectory> corpus,
                            std::uint64_t seed);

nlohmann::json sweep_to_json(std::span<const SweepRow> rows);
/// name,tokenizer,layers,mae,ratio,pre_ratio,bpe_gain,error
std::string sweep_to_csv(std::span<const SweepRow> rows);

}  // namespace omnisat
