#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "omnisat/tokenizer.hpp"

namespace omnisat {

nlohmann::json config_to_json(const TokenizerConfig& cfg);

/// Accepts {"preset": "omnisat8", ...overrides} or a flat config object.
TokenizerConfig config_from_json(const nlohmann::json& j);
TokenizerConfig read_config_file(const std::string& path);

nlohmann::json artifact_to_json(const TokenizerArtifact& artifact);
TokenizerArtifact artifact_from_json(const nlohmann::json& j);

/// Serialized form is deterministic: equal artifacts produce equal bytes.
std::string dump_artifact(const TokenizerArtifact& artifact);
void write_artifact_file(const std::string& path, const TokenizerArtifact& artifact);
TokenizerArtifact read_artifact_file(const std::string& path);

nlohmann::json tokens_to_json(const TokenizedTrajectory& tokens);
TokenizedTrajectory tokens_from_json(const nlohmann::json& j);
void write_tokens_file(const std::string& path, const std::vector<TokenizedTrajectory>& tokens);
std::vector<TokenizedTrajectory> read_tokens_file(const std::string& path);

struct PackedFrames {
  std::vector<std::vector<int>> visual;
  std::vector<std::vector<int>> action;
};

/// {"frames": [{"visual": [...], "action": [...]}], "stream": [...], "mask": "VA..."}
nlohmann::json packed_to_json(const PackedFrames& frames);
PackedFrames packed_frames_from_json(const nlohmann::json& j);

}  // namespace omnisat
