#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "rlrf/curation.hpp"
#include "rlrf/grpo.hpp"
#include "rlrf/raster.hpp"
#include "rlrf/reward.hpp"
#include "rlrf/semantic.hpp"
#include "rlrf/trainer.hpp"

namespace rlrf {

// Everything an experiment needs, read from one JSON file with the sections
// render, rewards, grpo, policy, curation and (optionally) semantic.
// Missing sections and keys keep their defaults; unknown sections are rejected.
struct AppConfig {
  RenderSpec render;
  EdgeParams edges;
  RewardSpec rewards = RewardSpec::defaults();
  grpo::TrainConfig grpo;
  train::SftOptions policy;
  curation::Criteria curation;
  SemanticBackend semantic = SemanticBackend::from_environment();

  void validate() const;
  nlohmann::ordered_json to_json() const;
};

// Throws ConfigError on malformed input.
AppConfig config_from_json(const nlohmann::ordered_json& j, AppConfig base = {});
AppConfig load_config(const std::filesystem::path& path);

}  // namespace rlrf
