#include "forage/env.hpp"

#include <algorithm>
#include <cctype>
#include <climits>
#include <cstdlib>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "forage/error.hpp"
#include "forage/io.hpp"

namespace forage::env {

namespace {

constexpr int kMaxGridSide = 4096;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string_view action_name(Action a) {
  switch (a) {
    case Action::Up: return "up";
    case Action::Down: return "down";
    case Action::Left: return "left";
    case Action::Right: return "right";
    case Action::Stay: return "stay";
  }
  return "?";
}

Action parse_action(std::string_view token) {
  const std::string t = lower(token);
  if (t == "u" || t == "up") return Action::Up;
  if (t == "d" || t == "down") return Action::Down;
  if (t == "l" || t == "left") return Action::Left;
  if (t == "r" || t == "right") return Action::Right;
  if (t == "s" || t == "stay") return Action::Stay;
  throw ParseError("unknown action token '" + std::string(token) + "'");
}

PatchId other_patch(PatchId p) {
  switch (p) {
    case PatchId::A: return PatchId::B;
    case PatchId::B: return PatchId::A;
    case PatchId::None: return PatchId::None;
  }
  return PatchId::None;
}

char patch_letter(PatchId p) {
  switch (p) {
    case PatchId::A: return 'A';
    case PatchId::B: return 'B';
    case PatchId::None: return '-';
  }
  return '-';
}

int measure_gap(std::span<const Tile> a, std::span<const Tile> b) {
  if (a.empty() || b.empty()) throw GeometryError("cannot measure gap to an empty patch");
  int best = INT_MAX;
  for (const auto& p : a) {
    for (const auto& q : b) {
      best = std::min(best, std::abs(p.x - q.x) + std::abs(p.y - q.y));
    }
  }
  return best - 1;
}

WorldMap::WorldMap(int width, int height, std::vector<Tile> patch_a, std::vector<Tile> patch_b,
                   int distance, Tile spawn, std::size_t episode_length)
    : width_(width),
      height_(height),
      patch_a_(std::move(patch_a)),
      patch_b_(std::move(patch_b)),
      distance_(distance),
      spawn_(spawn),
      episode_length_(episode_length) {
  if (width_ < 1 || height_ < 1 || width_ > kMaxGridSide || height_ > kMaxGridSide) {
    throw GeometryError("grid dimensions out of range");
  }
  if (episode_length_ < 1) throw ParameterError("episode length must be at least 1");
  if (patch_a_.empty() || patch_b_.empty()) throw GeometryError("patches must be non-empty");

  cells_.assign(static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_),
                PatchId::None);
  auto paint = [&](const std::vector<Tile>& tiles, PatchId id) {
    for (const auto& t : tiles) {
      if (!in_bounds(t)) throw GeometryError("patch tile outside the grid");
      auto& cell = cells_[tile_index(t)];
      if (cell != PatchId::None) throw GeometryError("patch regions overlap or repeat a tile");
      cell = id;
    }
  };
  paint(patch_a_, PatchId::A);
  paint(patch_b_, PatchId::B);

  if (!in_bounds(spawn_)) throw GeometryError("spawn outside the grid");
  if (cells_[tile_index(spawn_)] != PatchId::None) throw GeometryError("spawn inside a patch");
  if (distance_ < 1) throw GeometryError("inter-patch distance must be at least 1");
  const int gap = measure_gap(patch_a_, patch_b_);
  if (gap != distance_) {
    throw GeometryError("declared distance " + std::to_string(distance_) +
                        " differs from measured gap " + std::to_string(gap));
  }
}

const std::vector<Tile>& WorldMap::patch_tiles(PatchId p) const {
  switch (p) {
    case PatchId::A: return patch_a_;
    case PatchId::B: return patch_b_;
    case PatchId::None: break;
  }
  throw ParameterError("no tiles for PatchId::None");
}

WorldMap WorldMap::with_episode_length(std::size_t episode_length) const {
  WorldMap copy = *this;
  if (episode_length < 1) throw ParameterError("episode length must be at least 1");
  copy.episode_length_ = episode_length;
  return copy;
}

bool WorldMap::same_geometry(const WorldMap& o) const {
  return width_ == o.width_ && height_ == o.height_ && distance_ == o.distance_ &&
         spawn_ == o.spawn_ && cells_ == o.cells_;
}

bool operator==(const WorldMap& a, const WorldMap& b) {
  return a.same_geometry(b) && a.episode_length() == b.episode_length();
}

WorldMap build_map(int distance, int patch_side, int corridor_margin, std::size_t episode_length) {
  if (distance < 1) throw GeometryError("inter-patch distance must be at least 1");
  if (patch_side < 1) throw GeometryError("patch side must be at least 1");
  if (corridor_margin < 0) throw GeometryError("corridor margin must be nonnegative");
  const long width = 2L * corridor_margin + 2L * patch_side + distance;
  const long height = 2L * corridor_margin + patch_side;
  if (width > kMaxGridSide || height > kMaxGridSide) {
    throw GeometryError("map of width " + std::to_string(width) + " does not fit the grid limit");
  }
  const int left_a = corridor_margin;
  const int left_b = corridor_margin + patch_side + distance;
  std::vector<Tile> a;
  std::vector<Tile> b;
  for (int y = corridor_margin; y < corridor_margin + patch_side; ++y) {
    for (int dx = 0; dx < patch_side; ++dx) {
      a.push_back({left_a + dx, y});
      b.push_back({left_b + dx, y});
    }
  }
  const Tile spawn{corridor_margin + patch_side + distance / 2, corridor_margin + patch_side / 2};
  return WorldMap(static_cast<int>(width), static_cast<int>(height), std::move(a), std::move(b),
                  distance, spawn, episode_length);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::size_t sample_map_index(std::size_t map_count, std::mt19937_64& rng) {
  if (map_count == 0) throw ParameterError("cannot sample from an empty map set");
  std::uniform_int_distribution<std::size_t> pick(0, map_count - 1);
  return pick(rng);
}

const WorldMap& sample_map(std::span<const WorldMap> maps, std::mt19937_64& rng) {
  return maps[sample_map_index(maps.size(), rng)];
}

double cue_level(const PatchState& patch, const mvt::RewardParams& params) {
  if (patch.counter == 0) return 1.0;
  return mvt::reward_at(params, patch.counter) / params.peak;
}

ResetResult reset(std::shared_ptr<const WorldMap> map, std::uint64_t seed,
                  const mvt::RewardParams& params, int view_radius) {
  if (!map) throw ParameterError("reset needs a map");
  params.validate();
  if (view_radius < 1) throw ParameterError("view radius must be at least 1");
  ResetResult r;
  r.state.map = std::move(map);
  r.state.params = params;
  r.state.view_radius = view_radius;
  r.state.agent = r.state.map->spawn();
  r.state.rng.seed(seed);
  r.observation = observe(r.state, view_radius);
  return r;
}

StepOutcome step(EnvState& state, Action action) {
  if (state.done()) throw LifecycleError("step called after the episode finished");
  const WorldMap& map = *state.map;
  const PatchId before = state.occupied();

  Tile next = state.agent;
  switch (action) {
    case Action::Up: --next.y; break;
    case Action::Down: ++next.y; break;
    case Action::Left: --next.x; break;
    case Action::Right: ++next.x; break;
    case Action::Stay: break;
  }
  if (map.in_bounds(next)) state.agent = next;

  StepOutcome out;
  const PatchId now = state.occupied();
  if (now != PatchId::None) {
    if (now != before) {
      // Entering a patch replenishes the opposite one.
      state.patch(other_patch(now)) = PatchState{};
    }
    PatchState& p = state.patch(now);
    ++p.counter;
    out.reward = mvt::reward_at(state.params, p.counter);
    p.cue = out.reward / state.params.peak;
  }
  state.score += out.reward;
  ++state.step;
  out.done = state.done();
  out.observation = observe(state, state.view_radius);
  return out;
}

Observation observe(const EnvState& state, int view_radius) {
  if (view_radius < 1) throw ParameterError("view radius must be at least 1");
  const WorldMap& map = *state.map;
  Observation obs;
  obs.radius = view_radius;
  const int side = obs.side();
  obs.window.resize(static_cast<std::size_t>(side) * static_cast<std::size_t>(side));
  obs.patch = state.occupied();
  obs.in_patch = obs.patch != PatchId::None;
  obs.cue = obs.in_patch ? state.patch(obs.patch).cue : 0.0;

  for (int dy = -view_radius; dy <= view_radius; ++dy) {
    for (int dx = -view_radius; dx <= view_radius; ++dx) {
      const Tile t{state.agent.x + dx, state.agent.y + dy};
      TileCode code = TileCode::Wall;
      if (map.in_bounds(t)) {
        const PatchId p = map.patch_at(t);
        code = p == PatchId::A ? TileCode::PatchA
               : p == PatchId::B ? TileCode::PatchB
                                 : TileCode::Empty;
        const bool counts_as_other =
            p != PatchId::None && (obs.patch == PatchId::None || p != obs.patch);
        if (counts_as_other) obs.other_patch_visible = true;
      }
      if (dx == 0 && dy == 0) code = TileCode::Agent;
      obs.window[static_cast<std::size_t>((dy + view_radius) * side + (dx + view_radius))] = code;
    }
  }
  return obs;
}

std::string render_text(const EnvState& state) {
  const WorldMap& map = *state.map;
  std::string out;
  out.reserve(static_cast<std::size_t>((map.width() + 1) * map.height()));
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      const Tile t{x, y};
      if (t == state.agent) {
        out.push_back('@');
      } else {
        const PatchId p = map.patch_at(t);
        out.push_back(p == PatchId::None ? '.' : patch_letter(p));
      }
    }
    out.push_back('\n');
  }
  return out;
}

StepLog make_log(const EnvState& after, const StepOutcome& outcome) {
  StepLog log;
  log.step = after.step;
  log.x = after.agent.x;
  log.y = after.agent.y;
  log.patch_id = outcome.observation.patch;
  log.in_patch = outcome.observation.in_patch;
  log.reward = outcome.reward;
  log.cue = outcome.observation.cue;
  log.score = after.score;
  return log;
}

void write_trajectory_csv(std::ostream& out, std::span<const StepLog> logs) {
  out << kTrajectoryHeader << '\n';
  for (const auto& l : logs) {
    out << l.step << ',' << l.x << ',' << l.y << ',' << (l.in_patch ? 1 : 0) << ','
        << patch_letter(l.patch_id) << ',' << io::format_number(l.reward) << ','
        << io::format_number(l.cue) << ',' << io::format_number(l.score) << '\n';
  }
}

namespace {

nlohmann::json tiles_to_json(const std::vector<Tile>& tiles) {
  auto arr = nlohmann::json::array();
  for (const auto& t : tiles) arr.push_back({t.x, t.y});
  return arr;
}

std::vector<Tile> tiles_from_json(const nlohmann::json& j) {
  std::vector<Tile> tiles;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2) throw ParseError("tile must be a [x, y] pair");
    tiles.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
  }
  return tiles;
}

}  // namespace

std::string map_to_json(const WorldMap& map) {
  nlohmann::json j;
  j["format"] = "forage-map";
  j["version"] = 1;
  j["width"] = map.width();
  j["height"] = map.height();
  j["distance"] = map.distance();
  j["spawn"] = {map.spawn().x, map.spawn().y};
  j["episode_length"] = map.episode_length();
  j["patch_a"] = tiles_to_json(map.patch_tiles(PatchId::A));
  j["patch_b"] = tiles_to_json(map.patch_tiles(PatchId::B));
  return j.dump(2) + "\n";
}

WorldMap map_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("map file is not valid JSON: ") + e.what());
  }
  try {
    if (j.value("format", std::string{}) != "forage-map") throw ParseError("not a forage-map document");
    if (j.at("version").get<int>() != 1) throw ParseError("unsupported map version");
    const auto& spawn = j.at("spawn");
    return WorldMap(j.at("width").get<int>(), j.at("height").get<int>(),
                    tiles_from_json(j.at("patch_a")), tiles_from_json(j.at("patch_b")),
                    j.at("distance").get<int>(), Tile{spawn.at(0).get<int>(), spawn.at(1).get<int>()},
                    j.at("episode_length").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed map file: ") + e.what());
  }
}

void save_map(const WorldMap& map, const std::string& path) {
  io::write_text_file(path, map_to_json(map));
}

WorldMap load_map(const std::string& path) { return map_from_json(io::read_text_file(path)); }

}  // namespace forage::env
