#include "forage/config.hpp"

#include <set>
#include <type_traits>

#include "forage/error.hpp"
#include "forage/io.hpp"

namespace forage::config {

using nlohmann::json;
using nlohmann::ordered_json;

void RunConfig::validate() const {
  reward.validate();
  agent.validate();
  if (distances.empty()) throw ParameterError("env.distances must not be empty");
  if (patch_side < 1) throw ParameterError("env.patch_side must be at least 1");
  if (view_radius < 1) throw ParameterError("env.view_radius must be at least 1");
  if (episode_steps < 1) throw ParameterError("env.episode_steps must be at least 1");
  if (repetitions < 1) throw ParameterError("eval.repetitions must be at least 1");
  if (occupancy_steps < 1) throw ParameterError("eval.occupancy_steps must be at least 1");
  if (dream_horizon < 1) throw ParameterError("eval.dream_horizon must be at least 1");
  if (!(omega >= 0.0 && omega <= 1.0)) throw ParameterError("smoothing.omega must lie in [0, 1]");
  if (output_dir.empty()) throw ParameterError("output.dir must not be empty");
  std::set<int> seen;
  for (const int d : distances) {
    if (!seen.insert(d).second) throw ParameterError("env.distances repeats " + std::to_string(d));
  }
  maps();
  experiment().validate();
}

std::vector<env::WorldMap> RunConfig::maps() const {
  std::vector<env::WorldMap> out;
  for (const int d : distances) {
    out.push_back(env::build_map(d, patch_side, env::kDefaultCorridorMargin, episode_steps));
  }
  return out;
}

eval::ExperimentConfig RunConfig::experiment() const {
  eval::ExperimentConfig e;
  e.distances = distances;
  e.repetitions = repetitions;
  e.steps = episode_steps;
  e.occupancy_steps = occupancy_steps;
  e.master_seed = master_seed;
  return e;
}

namespace {

const json& section(const json& root, const char* name, std::initializer_list<const char*> keys) {
  static const json empty = json::object();
  if (!root.contains(name)) return empty;
  const json& s = root.at(name);
  if (!s.is_object()) throw ParseError(std::string("config section '") + name + "' must be an object");
  for (const auto& [key, value] : s.items()) {
    bool known = false;
    for (const char* k : keys) known = known || key == k;
    if (!known) throw ParseError(std::string("unknown config key '") + name + "." + key + "'");
  }
  return s;
}

template <typename T>
void read(const json& s, const char* key, T& out) {
  if (!s.contains(key)) return;
  const json& v = s.at(key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ParseError(std::string("'") + key + "' must be true or false");
  } else if constexpr (std::is_unsigned_v<T>) {
    if (!v.is_number_unsigned()) {
      throw ParseError(std::string("'") + key + "' must be a non-negative integer");
    }
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ParseError(std::string("'") + key + "' must be an integer");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ParseError(std::string("'") + key + "' must be a number");
  }
  out = v.get<T>();
}

}  // namespace

RunConfig from_json(std::string_view text) {
  RunConfig c;
  try {
    const json root = json::parse(text);
    if (!root.is_object()) throw ParseError("config must be a JSON object");
    for (const auto& [key, value] : root.items()) {
      static const std::set<std::string> sections{"reward", "env",       "agent",
                                                  "eval",   "smoothing", "output"};
      if (!sections.count(key)) throw ParseError("unknown config section '" + key + "'");
    }
    const json& r = section(root, "reward", {"N", "lambda"});
    read(r, "N", c.reward.peak);
    read(r, "lambda", c.reward.decay);

    const json& e = section(root, "env", {"distances", "patch_side", "view_radius", "episode_steps"});
    if (e.contains("distances")) {
      const json& d = e.at("distances");
      if (!d.is_array()) throw ParseError("'distances' must be an array of integers");
      c.distances.clear();
      for (const auto& x : d) {
        if (!x.is_number_integer()) throw ParseError("'distances' must be an array of integers");
        c.distances.push_back(x.get<int>());
      }
    }
    read(e, "patch_side", c.patch_side);
    read(e, "view_radius", c.view_radius);
    read(e, "episode_steps", c.episode_steps);

    const json& a = section(root, "agent", {"kind", "alpha", "epsilon", "gamma", "horizon",
                                            "lambda_return", "cue_bins", "episodes"});
    if (a.contains("kind")) c.kind = agents::parse_agent_kind(a.at("kind").get<std::string>());
    read(a, "alpha", c.agent.alpha);
    read(a, "epsilon", c.agent.epsilon);
    read(a, "gamma", c.agent.gamma);
    read(a, "horizon", c.agent.horizon);
    read(a, "lambda_return", c.agent.lambda_return);
    read(a, "cue_bins", c.agent.cue_bins);
    read(a, "episodes", c.agent.episodes);

    const json& v =
        section(root, "eval", {"repetitions", "occupancy_steps", "master_seed", "dream_horizon"});
    read(v, "repetitions", c.repetitions);
    read(v, "occupancy_steps", c.occupancy_steps);
    read(v, "master_seed", c.master_seed);
    read(v, "dream_horizon", c.dream_horizon);

    const json& s = section(root, "smoothing", {"omega", "literal"});
    read(s, "omega", c.omega);
    read(s, "literal", c.literal_smoothing);

    const json& o = section(root, "output", {"dir"});
    read(o, "dir", c.output_dir);
  } catch (const json::exception& ex) {
    throw ParseError(std::string("malformed config: ") + ex.what());
  }
  return c;
}

RunConfig load(const std::string& path) { return from_json(io::read_text_file(path)); }

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["reward"] = {{"N", c.reward.peak}, {"lambda", c.reward.decay}};
  j["env"] = {{"distances", c.distances},
              {"patch_side", c.patch_side},
              {"view_radius", c.view_radius},
              {"episode_steps", c.episode_steps}};
  j["agent"] = {{"kind", agents::to_string(c.kind)},
                {"alpha", c.agent.alpha},
                {"epsilon", c.agent.epsilon},
                {"gamma", c.agent.gamma},
                {"horizon", c.agent.horizon},
                {"lambda_return", c.agent.lambda_return},
                {"cue_bins", c.agent.cue_bins},
                {"episodes", c.agent.episodes}};
  j["eval"] = {{"repetitions", c.repetitions},
               {"occupancy_steps", c.occupancy_steps},
               {"master_seed", c.master_seed},
               {"dream_horizon", c.dream_horizon}};
  j["smoothing"] = {{"omega", c.omega}, {"literal", c.literal_smoothing}};
  j["output"] = {{"dir", c.output_dir}};
  return j;
}

}  // namespace forage::config
