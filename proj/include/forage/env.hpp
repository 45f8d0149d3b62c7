#pragma once

// Two-patch corridor world with exponentially depleting in-patch reward.

#include <array>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forage/mvt.hpp"

namespace forage::env {

struct Tile {
  int x = 0;
  int y = 0;
  auto operator<=>(const Tile&) const = default;
};

enum class PatchId : std::uint8_t { None = 0, A = 1, B = 2 };

enum class Action : std::uint8_t { Up = 0, Down = 1, Left = 2, Right = 3, Stay = 4 };

inline constexpr std::size_t kNumActions = 5;
/// Fixed order used for every tie-break.
inline constexpr std::array<Action, kNumActions> kActions = {
    Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay};

enum class TileCode : std::uint8_t { Empty = 0, PatchA = 1, PatchB = 2, Wall = 3, Agent = 4 };

inline constexpr std::size_t kDefaultEpisodeLength = 1500;
inline constexpr int kDefaultPatchSide = 3;
inline constexpr int kDefaultViewRadius = 5;
inline constexpr int kDefaultCorridorMargin = 1;

std::string_view action_name(Action a);
/// Accepts U/D/L/R/S and up/down/left/right/stay (any case).
Action parse_action(std::string_view token);
PatchId other_patch(PatchId p);
char patch_letter(PatchId p);

/// Number of empty tiles separating two tile sets along the shortest
/// Manhattan path, i.e. min |dx| + |dy| over all pairs, minus one.
int measure_gap(std::span<const Tile> a, std::span<const Tile> b);

/// Immutable grid geometry. Construction validates every invariant.
class WorldMap {
 public:
  WorldMap(int width, int height, std::vector<Tile> patch_a, std::vector<Tile> patch_b,
           int distance, Tile spawn, std::size_t episode_length = kDefaultEpisodeLength);

  int width() const { return width_; }
  int height() const { return height_; }
  int distance() const { return distance_; }
  Tile spawn() const { return spawn_; }
  std::size_t episode_length() const { return episode_length_; }
  const std::vector<Tile>& patch_tiles(PatchId p) const;
  std::size_t tile_count() const { return cells_.size(); }

  bool in_bounds(Tile t) const {
    return t.x >= 0 && t.y >= 0 && t.x < width_ && t.y < height_;
  }
  std::size_t tile_index(Tile t) const {
    return static_cast<std::size_t>(t.y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(t.x);
  }
  Tile tile_at(std::size_t index) const {
    return {static_cast<int>(index % static_cast<std::size_t>(width_)),
            static_cast<int>(index / static_cast<std::size_t>(width_))};
  }
  PatchId patch_at(Tile t) const {
    return in_bounds(t) ? cells_[tile_index(t)] : PatchId::None;
  }

  /// Copy with a different episode length (probe protocols vary it).
  WorldMap with_episode_length(std::size_t episode_length) const;

  /// Same grid, patches and spawn; the episode length is ignored.
  bool same_geometry(const WorldMap& other) const;

 private:
  int width_;
  int height_;
  std::vector<Tile> patch_a_;
  std::vector<Tile> patch_b_;
  int distance_;
  Tile spawn_;
  std::size_t episode_length_;
  std::vector<PatchId> cells_;
};

bool operator==(const WorldMap& a, const WorldMap& b);

/// Corridor world: two square patches of side `patch_side` whose nearest
/// edges are separated by exactly `distance` empty columns, surrounded by
/// `corridor_margin` free tiles, spawn at the corridor midpoint.
WorldMap build_map(int distance, int patch_side = kDefaultPatchSide,
                   int corridor_margin = kDefaultCorridorMargin,
                   std::size_t episode_length = kDefaultEpisodeLength);

/// Independent RNG seed for stream `index` of a master seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// Uniform draw from a non-empty map set.
const WorldMap& sample_map(std::span<const WorldMap> maps, std::mt19937_64& rng);
std::size_t sample_map_index(std::size_t map_count, std::mt19937_64& rng);

struct PatchState {
  std::size_t counter = 0;  ///< steps spent in the patch since its last replenishment
  double cue = 1.0;         ///< reward_at(counter) / N, or 1 when fresh
  bool operator==(const PatchState&) const = default;
};

struct Observation {
  int radius = kDefaultViewRadius;
  std::vector<TileCode> window;  ///< row-major, side x side
  double cue = 0.0;              ///< occupied patch cue, 0 outside both patches
  bool in_patch = false;
  PatchId patch = PatchId::None;
  bool other_patch_visible = false;

  int side() const { return 2 * radius + 1; }
  /// Code at offset (dx, dy) from the agent, both in [-radius, radius].
  TileCode at(int dx, int dy) const {
    return window[static_cast<std::size_t>((dy + radius) * side() + (dx + radius))];
  }
  bool operator==(const Observation&) const = default;
};

struct EnvState {
  std::shared_ptr<const WorldMap> map;
  mvt::RewardParams params;
  int view_radius = kDefaultViewRadius;
  Tile agent;
  std::array<PatchState, 2> patches;
  std::size_t step = 0;
  double score = 0.0;
  std::mt19937_64 rng;

  bool done() const { return step >= map->episode_length(); }
  PatchId occupied() const { return map->patch_at(agent); }
  const PatchState& patch(PatchId p) const { return patches.at(static_cast<std::size_t>(p) - 1); }
  PatchState& patch(PatchId p) { return patches.at(static_cast<std::size_t>(p) - 1); }

  bool operator==(const EnvState& o) const {
    return *map == *o.map && params.peak == o.params.peak && params.decay == o.params.decay &&
           view_radius == o.view_radius && agent == o.agent && patches == o.patches &&
           step == o.step && score == o.score && rng == o.rng;
  }
};

struct StepOutcome {
  Observation observation;
  double reward = 0.0;
  bool done = false;
};

struct ResetResult {
  EnvState state;
  Observation observation;
};

ResetResult reset(std::shared_ptr<const WorldMap> map, std::uint64_t seed,
                  const mvt::RewardParams& params = {}, int view_radius = kDefaultViewRadius);

/// Advances one step. Throws LifecycleError once the episode is done.
StepOutcome step(EnvState& state, Action action);

double cue_level(const PatchState& patch, const mvt::RewardParams& params);

Observation observe(const EnvState& state, int view_radius);

/// One character per tile: '.' free, 'A'/'B' patch, '@' agent. Rows end with '\n'.
std::string render_text(const EnvState& state);

/// One trajectory log record.
struct StepLog {
  std::size_t step = 0;
  int x = 0;
  int y = 0;
  bool in_patch = false;
  PatchId patch_id = PatchId::None;
  double reward = 0.0;
  double cue = 0.0;
  double score = 0.0;
  bool operator==(const StepLog&) const = default;
};

StepLog make_log(const EnvState& after, const StepOutcome& outcome);

inline constexpr std::string_view kTrajectoryHeader = "step,x,y,in_patch,patch_id,reward,cue,score";
void write_trajectory_csv(std::ostream& out, std::span<const StepLog> logs);

// Map description file (JSON).
std::string map_to_json(const WorldMap& map);
WorldMap map_from_json(std::string_view text);
void save_map(const WorldMap& map, const std::string& path);
WorldMap load_map(const std::string& path);

}  // namespace forage::env
