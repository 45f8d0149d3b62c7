#pragma once

// Run configuration shared by every CLI subcommand.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "forage/agents.hpp"
#include "forage/eval.hpp"
#include "forage/mvt.hpp"

namespace forage::config {

struct RunConfig {
  mvt::RewardParams reward;

  std::vector<int> distances{3, 5, 7, 9};
  int patch_side = env::kDefaultPatchSide;
  int view_radius = env::kDefaultViewRadius;
  std::size_t episode_steps = env::kDefaultEpisodeLength;

  agents::AgentKind kind = agents::AgentKind::ModelBased;
  agents::AgentConfig agent;

  std::size_t repetitions = 25;
  std::size_t occupancy_steps = 1000;
  std::uint64_t master_seed = 0;
  int dream_horizon = 50;

  double omega = 0.95;
  bool literal_smoothing = false;

  std::string output_dir = "out";

  /// Checks every field against its owning module. Throws ParameterError
  /// or GeometryError; nothing is written before this passes.
  void validate() const;

  /// One corridor map per configured distance.
  std::vector<env::WorldMap> maps() const;
  eval::ExperimentConfig experiment() const;
};

/// Parses the JSON config format. Missing keys keep their defaults; unknown
/// keys raise ParseError. The result is not validated.
RunConfig from_json(std::string_view text);
RunConfig load(const std::string& path);

nlohmann::ordered_json to_json(const RunConfig& config);

}  // namespace forage::config
