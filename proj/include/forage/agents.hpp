#pragma once

// Desk-scale learning agents: tabular Q-learning (model-free) and a
// count-based world model with imagination rollouts (model-based).

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "forage/env.hpp"
#include "forage/kernels.hpp"
#include "forage/mvt.hpp"

namespace forage::agents {

using env::Action;
using env::PatchId;

inline constexpr int kDefaultCueBins = 256;

/// Agent-side state abstraction. `tile` is a global index over the map
/// catalog the agent was trained on, so tiles of different maps never alias.
struct CompactState {
  std::uint32_t tile = 0;
  PatchId patch = PatchId::None;  ///< occupied patch
  std::uint16_t cue_bin = 0;      ///< sentinel (== bins) outside both patches
  bool other_fresh = false;
  PatchId last_patch = PatchId::None;  ///< agent memory: most recently occupied patch

  auto operator<=>(const CompactState&) const = default;
};

struct CompactStateHash {
  std::size_t operator()(const CompactState& s) const noexcept {
    std::uint64_t h = s.tile;
    h = h * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(s.patch);
    h = h * 0x9E3779B97F4A7C15ULL + s.cue_bin;
    h = h * 0x9E3779B97F4A7C15ULL + (s.other_fresh ? 1U : 0U);
    h = h * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(s.last_patch);
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

enum class AgentKind { ModelFree, ModelBased };

std::string to_string(AgentKind kind);
/// "model_free" or "model_based"; throws ParameterError otherwise.
AgentKind parse_agent_kind(std::string_view text);

struct AgentConfig {
  double alpha = 0.1;           ///< learning rate
  double epsilon = 0.1;         ///< exploration rate during training
  double gamma = 0.995;         ///< discount
  int horizon = 15;             ///< imagination horizon H
  double lambda_return = 0.95;  ///< return mixing
  int cue_bins = kDefaultCueBins;
  std::size_t episodes = 400;

  void validate() const;
  bool operator==(const AgentConfig&) const = default;
};

/// Remembers the last occupied patch across steps of one episode.
struct AgentMemory {
  PatchId last_patch = PatchId::None;
  void observe(const env::Observation& obs) {
    if (obs.in_patch) last_patch = obs.patch;
  }
};

/// Bin of the occupied patch's cue: floor(cue * bins) clamped to bins - 1.
std::uint16_t cue_bin(double cue, int bins);

/// Observation + agent position + memory -> CompactState. The memory must
/// already include `obs`.
CompactState encode_state(const env::Observation& obs, std::uint32_t global_tile,
                          const AgentMemory& memory, int cue_bins);

/// Maps of the training set, with a global tile numbering across them.
class MapCatalog {
 public:
  MapCatalog() = default;
  explicit MapCatalog(std::vector<env::WorldMap> maps);

  const std::vector<env::WorldMap>& maps() const { return maps_; }
  std::size_t size() const { return maps_.size(); }
  std::uint32_t global_tile(std::size_t map_index, env::Tile t) const;
  /// Index of the catalog map sharing `map`'s geometry. Throws
  /// CompatibilityError when none does.
  std::size_t find(const env::WorldMap& map) const;
  std::size_t map_of_tile(std::uint32_t global_tile) const;

 private:
  std::vector<env::WorldMap> maps_;
  std::vector<std::uint32_t> offsets_;
};

using QRow = std::array<double, env::kNumActions>;

class QTable {
 public:
  double get(const CompactState& s, Action a) const;
  QRow row(const CompactState& s) const;
  void set(const CompactState& s, Action a, double value);
  QRow& mutable_row(const CompactState& s) { return rows_[s]; }
  double max_value(const CompactState& s) const;
  /// Argmax with ties resolved toward the earlier action in env::kActions.
  Action greedy(const CompactState& s) const;
  bool contains(const CompactState& s) const { return rows_.count(s) != 0; }
  std::size_t size() const { return rows_.size(); }
  /// Rows sorted by state, for deterministic serialization.
  std::vector<std::pair<CompactState, QRow>> sorted_rows() const;
  void clear() { rows_.clear(); }

 private:
  std::unordered_map<CompactState, QRow, CompactStateHash> rows_;
};

Action argmax_action(const QRow& row);

/// With probability 1 - epsilon the greedy action, otherwise uniform.
Action act_epsilon_greedy(const QTable& q, const CompactState& s, double epsilon,
                          std::mt19937_64& rng);

struct Transition {
  CompactState state;
  Action action = Action::Stay;
  double reward = 0.0;
  CompactState next;
};

/// One-step Q-learning backup.
void qlearn_update(QTable& q, const Transition& t, double alpha, double gamma);

using StateId = std::uint32_t;

struct Successor {
  StateId next = 0;
  std::uint32_t count = 0;
  bool operator==(const Successor&) const = default;
};

struct ActionModel {
  std::uint32_t visits = 0;
  double reward_sum = 0.0;
  std::vector<Successor> successors;  ///< in order of first observation

  bool known() const { return visits > 0; }
  double mean_reward() const { return visits ? reward_sum / visits : 0.0; }
  bool operator==(const ActionModel&) const = default;
};

/// Count-based transition and reward model over CompactStates.
class WorldModel {
 public:
  StateId intern(const CompactState& s);
  std::optional<StateId> find(const CompactState& s) const;
  const CompactState& state(StateId id) const { return states_.at(id); }
  std::size_t size() const { return states_.size(); }

  /// True when at least one action has been observed from `s`.
  bool known(const CompactState& s) const;
  bool known(const CompactState& s, Action a) const;
  bool known(StateId id, Action a) const { return actions_[id][static_cast<std::size_t>(a)].known(); }

  void update(const Transition& t);
  /// Replaces the statistics of one pair (used when loading artifacts).
  void set_action_model(StateId id, Action a, ActionModel model);

  const ActionModel& action_model(StateId id, Action a) const {
    return actions_.at(id)[static_cast<std::size_t>(a)];
  }
  double probability(const CompactState& s, Action a, const CompactState& next) const;
  double mean_reward(const CompactState& s, Action a) const;
  /// Highest-count successor, ties to the first observed.
  StateId most_likely(StateId id, Action a) const;
  StateId sample(StateId id, Action a, std::mt19937_64& rng) const;

  /// Multiplies every stored reward by `factor`.
  void scale_rewards(double factor);

  /// Adds state `id` of `other` (and its outgoing statistics) to this model,
  /// interning successors as needed.
  void absorb_state(const WorldModel& other, StateId id);

  /// Caches, for every pair with several successors, the one with the
  /// lowest value in `state_values` (indexed by StateId; missing ids read 0).
  void rank_successors(std::span<const double> state_values);
  /// Cached lowest-value successor, if ranked since it was last changed.
  std::optional<StateId> cached_worst(StateId id, Action a) const;

  /// Compares statistics only; the successor ranking cache is ignored.
  bool operator==(const WorldModel&) const;

 private:
  static constexpr StateId kNoWorst = std::numeric_limits<StateId>::max();

  std::unordered_map<CompactState, StateId, CompactStateHash> index_;
  std::vector<CompactState> states_;
  std::vector<std::array<ActionModel, env::kNumActions>> actions_;
  std::vector<std::array<StateId, env::kNumActions>> worst_;
};

void model_update(WorldModel& m, const Transition& t);

using kernels::DenseModel;

DenseModel flatten(const WorldModel& m);

struct ValueIterationStats {
  std::size_t sweeps = 0;
  double residual = 0.0;
};

/// Jacobi value iteration on the learned model. `values` is warm-started and
/// resized to the model; `q` receives Q(s, a) in row-major (state, action)
/// order. Unknown pairs are left at 0 and never enter the max.
ValueIterationStats value_iteration(const DenseModel& model, double gamma,
                                    std::vector<double>& values, std::vector<double>& q,
                                    double tolerance, std::size_t max_sweeps, bool parallel = true);

/// Copies dense Q values into a QTable keyed by CompactState.
void export_q(const WorldModel& m, std::span<const double> q, QTable& out);

/// Re-ranks the model's successors under the values implied by `q`.
void refresh_worst_successors(WorldModel& m, const QTable& q);

/// V(s): max of Q over model-known actions, or over the whole row when none
/// is known.
double state_value(const WorldModel& m, const QTable& q, const CompactState& s);

struct ImaginedStep {
  CompactState state;      ///< state the step starts from
  Action action = Action::Stay;
  double reward = 0.0;     ///< predicted mean reward
  CompactState next;       ///< predicted successor
  double value = 0.0;      ///< V(next)
};

struct ImaginedTrajectory {
  CompactState start;
  std::vector<ImaginedStep> steps;
  /// 1-based step at which an unknown (state, action) pair stopped the dream.
  std::optional<std::size_t> truncated_at;

  std::vector<Action> actions() const;
  /// States visited, including the start.
  std::size_t length() const { return steps.size() + 1; }
};

/// Chooses the action for dream step `step` (0-based) from `state`.
using RolloutPolicy = std::function<Action(const CompactState& state, std::size_t step)>;

/// Worst picks the recorded successor with the lowest state value, matching
/// the pessimistic backup the value solve uses.
enum class SuccessorMode { MostLikely, Sampled, Worst };

/// Dreams up to `horizon` transitions through the model. Throws
/// UnknownStateError when `start` was never visited.
ImaginedTrajectory imagine_rollout(const WorldModel& m, const QTable& values,
                                   const CompactState& start, const RolloutPolicy& policy,
                                   int horizon, SuccessorMode mode = SuccessorMode::MostLikely,
                                   std::mt19937_64* rng = nullptr);

/// Greedy continuation over model-known actions.
RolloutPolicy greedy_rollout_policy(const WorldModel& m, const QTable& values);

/// Recursive lambda-return G_0 with G_t = r_t + gamma ((1 - lambda) v_{t+1} +
/// lambda G_{t+1}) and G_T = v_T. `values` holds either v_1..v_T (same length
/// as rewards) or v_0..v_T (one longer; v_0 is ignored).
double lambda_return(std::span<const double> rewards, std::span<const double> values,
                     double gamma, double lambda);

struct PlanOptions {
  bool explore = false;  ///< try untested actions first and use epsilon fallback
};

/// Scores every action by the lambda-return of a greedy-continuation dream
/// and returns the best (ties to the fixed action order). Unknown states fall
/// back to epsilon-greedy on `values`.
Action plan_action(const WorldModel& m, const QTable& values, const CompactState& s,
                   const AgentConfig& config, std::mt19937_64& rng, PlanOptions options = {});

struct LearningCurve {
  std::vector<double> returns;
  std::vector<std::size_t> map_index;  ///< map drawn for each episode
};

struct PolicyArtifact {
  static constexpr int kVersion = 1;
  AgentKind kind = AgentKind::ModelFree;
  AgentConfig config;
  mvt::RewardParams reward;
  int view_radius = env::kDefaultViewRadius;
  std::uint64_t seed = 0;
  MapCatalog catalog;
  QTable q;
  WorldModel model;  ///< empty for model-free agents

  bool has_model() const { return kind == AgentKind::ModelBased; }
};

std::string artifact_to_json(const PolicyArtifact& artifact);
PolicyArtifact artifact_from_json(std::string_view text);
void save_artifact(const PolicyArtifact& artifact, const std::string& path);
PolicyArtifact load_artifact(const std::string& path);

struct TrainOptions {
  int view_radius = env::kDefaultViewRadius;
  double vi_tolerance = 1e-6;
  std::size_t vi_max_sweeps = 300;        ///< per episode, warm-started
  std::size_t final_vi_max_sweeps = 20000;  ///< closing solve, cold-started
  bool parallel = true;
};

struct TrainResult {
  PolicyArtifact artifact;
  LearningCurve curve;
  ValueIterationStats final_vi;  ///< model-based only
};

/// Trains an agent over `maps`, drawing one map uniformly per episode.
/// Model-based training plans optimistically; the artifact's Q table comes
/// from a final solve of the learned model without optimism.
TrainResult train(AgentKind kind, std::span<const env::WorldMap> maps, const AgentConfig& config,
                  const mvt::RewardParams& reward, std::uint64_t seed,
                  const TrainOptions& options = {});

/// Stateful per-episode controller.
class EpisodePolicy {
 public:
  virtual ~EpisodePolicy() = default;
  virtual Action act(const env::Observation& obs, env::Tile agent) = 0;
};

/// Builds a fresh controller for one episode on `map`.
using PolicyFactory = std::function<std::unique_ptr<EpisodePolicy>(const env::WorldMap& map)>;

/// Exploration-free controller backed by a trained artifact. Throws
/// CompatibilityError when the map is not in the artifact's catalog.
std::unique_ptr<EpisodePolicy> make_greedy_policy(std::shared_ptr<const PolicyArtifact> artifact,
                                                  const env::WorldMap& map);
PolicyFactory greedy_policy_factory(std::shared_ptr<const PolicyArtifact> artifact);

}  // namespace forage::agents
