#include "forage/agents.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "forage/error.hpp"
#include "forage/io.hpp"

namespace forage::agents {

namespace {

constexpr std::size_t kA = env::kNumActions;

std::size_t idx(Action a) { return static_cast<std::size_t>(a); }

Action random_action(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, kA - 1);
  return env::kActions[pick(rng)];
}

}  // namespace

std::string to_string(AgentKind kind) {
  return kind == AgentKind::ModelFree ? "model_free" : "model_based";
}

AgentKind parse_agent_kind(std::string_view text) {
  if (text == "model_free") return AgentKind::ModelFree;
  if (text == "model_based") return AgentKind::ModelBased;
  throw ParameterError("unknown agent kind '" + std::string(text) +
                       "' (expected model_free or model_based)");
}

void AgentConfig::validate() const {
  // alpha = 0 is accepted: it freezes learning, which the no-update
  // baseline relies on.
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterError("alpha must lie in [0, 1]");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ParameterError("epsilon must lie in [0, 1]");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ParameterError("gamma must lie in (0, 1)");
  if (horizon < 1) throw ParameterError("imagination horizon must be at least 1");
  if (!(lambda_return >= 0.0 && lambda_return <= 1.0)) {
    throw ParameterError("lambda_return must lie in [0, 1]");
  }
  if (cue_bins < 1 || cue_bins > 65535) throw ParameterError("cue_bins must lie in [1, 65535]");
  if (episodes < 1) throw ParameterError("training needs at least one episode");
}

std::uint16_t cue_bin(double cue, int bins) {
  if (!(cue >= 0.0 && cue <= 1.0)) throw ParameterError("cue must lie in [0, 1]");
  if (bins < 1) throw ParameterError("cue bins must be positive");
  const auto b = static_cast<long>(std::floor(cue * bins));
  return static_cast<std::uint16_t>(std::clamp<long>(b, 0, bins - 1));
}

CompactState encode_state(const env::Observation& obs, std::uint32_t global_tile,
                          const AgentMemory& memory, int cue_bins) {
  CompactState s;
  s.tile = global_tile;
  s.patch = obs.in_patch ? obs.patch : PatchId::None;
  s.cue_bin = obs.in_patch ? cue_bin(obs.cue, cue_bins) : static_cast<std::uint16_t>(cue_bins);
  if (!obs.in_patch && !(obs.cue >= 0.0 && obs.cue <= 1.0)) {
    throw ParameterError("cue must lie in [0, 1]");
  }
  // Entering a patch replenishes the other one, so once any patch has been
  // occupied the patch opposite the last one is known to be fresh.
  s.other_fresh = memory.last_patch != PatchId::None;
  s.last_patch = memory.last_patch;
  return s;
}

// --- MapCatalog -------------------------------------------------------------

MapCatalog::MapCatalog(std::vector<env::WorldMap> maps) : maps_(std::move(maps)) {
  std::uint64_t total = 0;
  for (const auto& m : maps_) {
    offsets_.push_back(static_cast<std::uint32_t>(total));
    total += m.tile_count();
  }
  if (total > std::numeric_limits<std::uint32_t>::max()) {
    throw GeometryError("map catalog has too many tiles");
  }
}

std::uint32_t MapCatalog::global_tile(std::size_t map_index, env::Tile t) const {
  return offsets_.at(map_index) + static_cast<std::uint32_t>(maps_.at(map_index).tile_index(t));
}

std::size_t MapCatalog::find(const env::WorldMap& map) const {
  for (std::size_t i = 0; i < maps_.size(); ++i) {
    if (maps_[i].same_geometry(map)) return i;
  }
  throw CompatibilityError("map with distance " + std::to_string(map.distance()) + " (" +
                           std::to_string(map.width()) + "x" + std::to_string(map.height()) +
                           ") is not part of the policy's training maps");
}

std::size_t MapCatalog::map_of_tile(std::uint32_t global_tile) const {
  const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), global_tile);
  if (it == offsets_.begin()) throw ParameterError("tile index below catalog range");
  const auto m = static_cast<std::size_t>(it - offsets_.begin()) - 1;
  if (global_tile - offsets_[m] >= maps_[m].tile_count()) {
    throw ParameterError("tile index beyond catalog range");
  }
  return m;
}

// --- QTable -----------------------------------------------------------------

Action argmax_action(const QRow& row) {
  std::size_t best = 0;
  for (std::size_t a = 1; a < kA; ++a) {
    if (row[a] > row[best]) best = a;
  }
  return env::kActions[best];
}

double QTable::get(const CompactState& s, Action a) const {
  const auto it = rows_.find(s);
  return it == rows_.end() ? 0.0 : it->second[idx(a)];
}

QRow QTable::row(const CompactState& s) const {
  const auto it = rows_.find(s);
  return it == rows_.end() ? QRow{} : it->second;
}

void QTable::set(const CompactState& s, Action a, double value) {
  if (!std::isfinite(value)) throw InvariantError("non-finite Q value");
  rows_[s][idx(a)] = value;
}

double QTable::max_value(const CompactState& s) const {
  const QRow r = row(s);
  return *std::max_element(r.begin(), r.end());
}

Action QTable::greedy(const CompactState& s) const { return argmax_action(row(s)); }

std::vector<std::pair<CompactState, QRow>> QTable::sorted_rows() const {
  std::vector<std::pair<CompactState, QRow>> out(rows_.begin(), rows_.end());
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

Action act_epsilon_greedy(const QTable& q, const CompactState& s, double epsilon,
                          std::mt19937_64& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ParameterError("epsilon must lie in [0, 1]");
  if (epsilon > 0.0) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon) return random_action(rng);
  }
  return q.greedy(s);
}

void qlearn_update(QTable& q, const Transition& t, double alpha, double gamma) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterError("alpha must lie in [0, 1]");
  const double target = t.reward + gamma * q.max_value(t.next);
  QRow& row = q.mutable_row(t.state);
  double& value = row[idx(t.action)];
  value += alpha * (target - value);
}

// --- WorldModel -------------------------------------------------------------

StateId WorldModel::intern(const CompactState& s) {
  const auto [it, inserted] = index_.try_emplace(s, static_cast<StateId>(states_.size()));
  if (inserted) {
    states_.push_back(s);
    actions_.emplace_back();
  }
  return it->second;
}

std::optional<StateId> WorldModel::find(const CompactState& s) const {
  const auto it = index_.find(s);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool WorldModel::known(const CompactState& s) const {
  const auto id = find(s);
  if (!id) return false;
  return std::any_of(actions_[*id].begin(), actions_[*id].end(),
                     [](const ActionModel& m) { return m.known(); });
}

bool WorldModel::known(const CompactState& s, Action a) const {
  const auto id = find(s);
  return id && known(*id, a);
}

void WorldModel::update(const Transition& t) {
  const StateId from = intern(t.state);
  const StateId to = intern(t.next);
  ActionModel& m = actions_[from][idx(t.action)];
  if (from < worst_.size()) worst_[from][idx(t.action)] = kNoWorst;
  ++m.visits;
  m.reward_sum += t.reward;
  for (auto& succ : m.successors) {
    if (succ.next == to) {
      ++succ.count;
      return;
    }
  }
  m.successors.push_back({to, 1});
}

void WorldModel::set_action_model(StateId id, Action a, ActionModel model) {
  std::uint32_t total = 0;
  for (const auto& s : model.successors) {
    if (s.next >= states_.size()) throw ParseError("successor id out of range");
    total += s.count;
  }
  if (total != model.visits) throw ParseError("successor counts do not sum to visits");
  actions_.at(id)[idx(a)] = std::move(model);
  if (id < worst_.size()) worst_[id][idx(a)] = kNoWorst;
}

double WorldModel::probability(const CompactState& s, Action a, const CompactState& next) const {
  const auto from = find(s);
  const auto to = find(next);
  if (!from || !to) return 0.0;
  const ActionModel& m = actions_[*from][idx(a)];
  if (!m.known()) return 0.0;
  for (const auto& succ : m.successors) {
    if (succ.next == *to) return static_cast<double>(succ.count) / m.visits;
  }
  return 0.0;
}

double WorldModel::mean_reward(const CompactState& s, Action a) const {
  const auto from = find(s);
  return from ? actions_[*from][idx(a)].mean_reward() : 0.0;
}

StateId WorldModel::most_likely(StateId id, Action a) const {
  const ActionModel& m = actions_.at(id)[idx(a)];
  if (!m.known()) throw UnknownStateError("no successor recorded for this state-action pair");
  const Successor* best = &m.successors.front();
  for (const auto& succ : m.successors) {
    if (succ.count > best->count) best = &succ;
  }
  return best->next;
}

StateId WorldModel::sample(StateId id, Action a, std::mt19937_64& rng) const {
  const ActionModel& m = actions_.at(id)[idx(a)];
  if (!m.known()) throw UnknownStateError("no successor recorded for this state-action pair");
  std::uniform_int_distribution<std::uint32_t> pick(0, m.visits - 1);
  std::uint32_t ticket = pick(rng);
  for (const auto& succ : m.successors) {
    if (ticket < succ.count) return succ.next;
    ticket -= succ.count;
  }
  return m.successors.back().next;
}

void WorldModel::scale_rewards(double factor) {
  for (auto& row : actions_) {
    for (auto& m : row) m.reward_sum *= factor;
  }
}

void WorldModel::absorb_state(const WorldModel& other, StateId id) {
  const StateId mine = intern(other.state(id));
  for (std::size_t a = 0; a < kA; ++a) {
    const ActionModel& src = other.actions_[id][a];
    ActionModel copy;
    copy.visits = src.visits;
    copy.reward_sum = src.reward_sum;
    for (const auto& succ : src.successors) {
      copy.successors.push_back({intern(other.state(succ.next)), succ.count});
    }
    actions_[mine][a] = std::move(copy);
  }
}

void WorldModel::rank_successors(std::span<const double> state_values) {
  auto value = [&](StateId id) { return id < state_values.size() ? state_values[id] : 0.0; };
  worst_.assign(states_.size(), {});
  for (StateId s = 0; s < states_.size(); ++s) {
    for (std::size_t a = 0; a < kA; ++a) {
      const auto& succ = actions_[s][a].successors;
      StateId worst = kNoWorst;
      if (!succ.empty()) {
        worst = succ.front().next;
        for (std::size_t k = 1; k < succ.size(); ++k) {
          if (value(succ[k].next) < value(worst)) worst = succ[k].next;
        }
      }
      worst_[s][a] = worst;
    }
  }
}

std::optional<StateId> WorldModel::cached_worst(StateId id, Action a) const {
  if (id >= worst_.size() || worst_[id][idx(a)] == kNoWorst) return std::nullopt;
  return worst_[id][idx(a)];
}

bool WorldModel::operator==(const WorldModel& o) const {
  return states_ == o.states_ && actions_ == o.actions_;
}

void model_update(WorldModel& m, const Transition& t) { m.update(t); }

DenseModel flatten(const WorldModel& m) {
  DenseModel d;
  d.num_states = m.size();
  d.pair_begin.reserve(d.num_states * kA + 1);
  d.reward.assign(d.num_states * kA, 0.0);
  d.known.assign(d.num_states * kA, 0);
  d.pair_begin.push_back(0);
  d.backup = kernels::Backup::Pessimistic;
  for (StateId s = 0; s < d.num_states; ++s) {
    for (std::size_t a = 0; a < kA; ++a) {
      const ActionModel& am = m.action_model(s, env::kActions[a]);
      const std::size_t p = s * kA + a;
      if (am.known()) {
        d.known[p] = 1;
        d.reward[p] = am.mean_reward();
        for (const auto& succ : am.successors) {
          d.next.push_back(succ.next);
          d.prob.push_back(static_cast<double>(succ.count) / am.visits);
        }
      }
      d.pair_begin.push_back(static_cast<std::uint32_t>(d.next.size()));
    }
  }
  return d;
}

ValueIterationStats value_iteration(const DenseModel& model, double gamma,
                                    std::vector<double>& values, std::vector<double>& q,
                                    double tolerance, std::size_t max_sweeps, bool parallel) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ParameterError("gamma must lie in (0, 1)");
  values.resize(model.num_states, 0.0);
  q.assign(model.num_states * kA, 0.0);
  std::vector<double> next(model.num_states, 0.0);
  ValueIterationStats stats;
  for (; stats.sweeps < max_sweeps;) {
    ++stats.sweeps;
    stats.residual = parallel ? kernels::bellman_sweep_parallel(model, gamma, values, next, q)
                              : kernels::bellman_sweep_serial(model, gamma, values, next, q);
    values.swap(next);
    if (stats.residual < tolerance) break;
  }
  return stats;
}

void export_q(const WorldModel& m, std::span<const double> q, QTable& out) {
  out.clear();
  for (StateId s = 0; s < m.size(); ++s) {
    bool any = false;
    QRow row{};
    for (std::size_t a = 0; a < kA; ++a) {
      if (m.known(s, env::kActions[a])) {
        row[a] = q[s * kA + a];
        any = true;
      }
    }
    if (any) out.mutable_row(m.state(s)) = row;
  }
}

void refresh_worst_successors(WorldModel& m, const QTable& q) {
  std::vector<double> v(m.size());
  for (StateId s = 0; s < m.size(); ++s) v[s] = state_value(m, q, m.state(s));
  m.rank_successors(v);
}

double state_value(const WorldModel& m, const QTable& q, const CompactState& s) {
  const auto id = m.find(s);
  if (id) {
    bool any = false;
    double best = 0.0;
    const QRow row = q.row(s);
    for (std::size_t a = 0; a < kA; ++a) {
      if (!m.known(*id, env::kActions[a])) continue;
      if (!any || row[a] > best) best = row[a];
      any = true;
    }
    if (any) return best;
  }
  return q.max_value(s);
}

// --- Imagination ------------------------------------------------------------

std::vector<Action> ImaginedTrajectory::actions() const {
  std::vector<Action> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.action);
  return out;
}

namespace {

StateId worst_successor(const WorldModel& m, const QTable& values, StateId id, Action a) {
  const auto& succ = m.action_model(id, a).successors;
  if (succ.size() == 1) return succ.front().next;
  if (const auto cached = m.cached_worst(id, a)) return *cached;
  StateId worst = succ.front().next;
  double worst_value = state_value(m, values, m.state(worst));
  for (std::size_t k = 1; k < succ.size(); ++k) {
    const double v = state_value(m, values, m.state(succ[k].next));
    if (v < worst_value) {
      worst = succ[k].next;
      worst_value = v;
    }
  }
  return worst;
}

}  // namespace

ImaginedTrajectory imagine_rollout(const WorldModel& m, const QTable& values,
                                   const CompactState& start, const RolloutPolicy& policy,
                                   int horizon, SuccessorMode mode, std::mt19937_64* rng) {
  if (horizon < 1) throw ParameterError("imagination horizon must be at least 1");
  if (mode == SuccessorMode::Sampled && rng == nullptr) {
    throw ParameterError("sampled rollouts need an rng");
  }
  const auto start_id = m.find(start);
  if (!start_id || !m.known(start)) {
    throw UnknownStateError("dream start state was never visited");
  }
  ImaginedTrajectory traj;
  traj.start = start;
  traj.steps.reserve(static_cast<std::size_t>(horizon));
  StateId cur = *start_id;
  for (int t = 0; t < horizon; ++t) {
    const CompactState& s = m.state(cur);
    const Action a = policy(s, static_cast<std::size_t>(t));
    if (!m.known(cur, a)) {
      traj.truncated_at = static_cast<std::size_t>(t) + 1;
      break;
    }
    StateId nxt = 0;
    switch (mode) {
      case SuccessorMode::MostLikely: nxt = m.most_likely(cur, a); break;
      case SuccessorMode::Sampled: nxt = m.sample(cur, a, *rng); break;
      case SuccessorMode::Worst: nxt = worst_successor(m, values, cur, a); break;
    }
    ImaginedStep step;
    step.state = s;
    step.action = a;
    step.reward = m.action_model(cur, a).mean_reward();
    step.next = m.state(nxt);
    step.value = state_value(m, values, step.next);
    traj.steps.push_back(step);
    cur = nxt;
  }
  return traj;
}

RolloutPolicy greedy_rollout_policy(const WorldModel& m, const QTable& values) {
  return [&m, &values](const CompactState& s, std::size_t) {
    const auto id = m.find(s);
    if (!id) return Action::Up;
    const QRow row = values.row(s);
    std::optional<std::size_t> best;
    for (std::size_t a = 0; a < kA; ++a) {
      if (!m.known(*id, env::kActions[a])) continue;
      if (!best || row[a] > row[*best]) best = a;
    }
    return best ? env::kActions[*best] : Action::Up;
  };
}

double lambda_return(std::span<const double> rewards, std::span<const double> values, double gamma,
                     double lambda) {
  const std::size_t horizon = rewards.size();
  if (horizon == 0) throw ShapeError("lambda return needs at least one reward");
  if (values.size() != horizon && values.size() != horizon + 1) {
    throw ShapeError("values must have the same length as rewards, or one more");
  }
  const std::size_t shift = values.size() == horizon ? 0 : 1;
  // value_after(t) = v_{t+1}
  auto value_after = [&](std::size_t t) { return values[t + shift]; };
  double g = value_after(horizon - 1);
  for (std::size_t t = horizon; t-- > 0;) {
    g = rewards[t] + gamma * ((1.0 - lambda) * value_after(t) + lambda * g);
  }
  return g;
}

Action plan_action(const WorldModel& m, const QTable& values, const CompactState& s,
                   const AgentConfig& config, std::mt19937_64& rng, PlanOptions options) {
  const auto id = m.find(s);
  const double fallback_eps = options.explore ? config.epsilon : 0.0;
  if (!id || !m.known(s)) return act_epsilon_greedy(values, s, fallback_eps, rng);

  const RolloutPolicy greedy = greedy_rollout_policy(m, values);
  std::optional<Action> best;
  double best_score = 0.0;
  std::vector<double> rewards;
  std::vector<double> next_values;
  for (const Action a : env::kActions) {
    if (!m.known(*id, a)) {
      if (options.explore) return a;
      continue;
    }
    const auto traj = imagine_rollout(
        m, values, s,
        [&](const CompactState& st, std::size_t t) { return t == 0 ? a : greedy(st, t); },
        config.horizon, SuccessorMode::Worst);
    rewards.clear();
    next_values.clear();
    for (const auto& step : traj.steps) {
      rewards.push_back(step.reward);
      next_values.push_back(step.value);
    }
    const double score =
        lambda_return(rewards, next_values, config.gamma, config.lambda_return);
    if (!best || score > best_score) {
      best = a;
      best_score = score;
    }
  }
  if (!best) return act_epsilon_greedy(values, s, fallback_eps, rng);
  return *best;
}

// --- Training ---------------------------------------------------------------

TrainResult train(AgentKind kind, std::span<const env::WorldMap> maps, const AgentConfig& config,
                  const mvt::RewardParams& reward, std::uint64_t seed,
                  const TrainOptions& options) {
  config.validate();
  reward.validate();
  if (maps.empty()) throw ParameterError("training needs at least one map");

  const MapCatalog catalog(std::vector<env::WorldMap>(maps.begin(), maps.end()));
  std::vector<std::shared_ptr<const env::WorldMap>> shared;
  for (const auto& m : catalog.maps()) shared.push_back(std::make_shared<const env::WorldMap>(m));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  QTable q;
  WorldModel model;
  std::vector<double> values;
  std::vector<double> dense_q;
  TrainResult result;
  std::vector<std::optional<QTable>> best_q(catalog.size());
  std::vector<double> best_return(catalog.size(), 0.0);

  for (std::size_t ep = 0; ep < config.episodes; ++ep) {
    const std::size_t mi = env::sample_map_index(catalog.size(), rng);
    auto [state, obs] = env::reset(shared[mi], env::derive_seed(seed, ep), reward,
                                   options.view_radius);
    AgentMemory memory;
    memory.observe(obs);
    CompactState s = encode_state(obs, catalog.global_tile(mi, state.agent), memory,
                                  config.cue_bins);
    while (!state.done()) {
      Action a;
      if (kind == AgentKind::ModelFree) {
        a = q.contains(s) ? act_epsilon_greedy(q, s, config.epsilon, rng) : random_action(rng);
      } else if (config.epsilon > 0.0 && coin(rng) < config.epsilon) {
        a = random_action(rng);
      } else {
        a = plan_action(model, q, s, config, rng, PlanOptions{.explore = true});
      }
      const env::StepOutcome out = env::step(state, a);
      memory.observe(out.observation);
      const CompactState next = encode_state(
          out.observation, catalog.global_tile(mi, state.agent), memory, config.cue_bins);
      const Transition t{s, a, out.reward, next};
      if (kind == AgentKind::ModelFree) {
        qlearn_update(q, t, config.alpha, config.gamma);
      } else {
        model_update(model, t);
      }
      s = next;
    }

    if (kind == AgentKind::ModelBased) {
      // Untried pairs are valued as if the best reward arrived forever, which
      // pulls the planner toward unexplored corridor and patch states.
      DenseModel dense = flatten(model);
      dense.optimistic_value = reward.peak / (1.0 - config.gamma);
      value_iteration(dense, config.gamma, values, dense_q, options.vi_tolerance,
                      options.vi_max_sweeps, options.parallel);
      export_q(model, dense_q, q);
      refresh_worst_successors(model, q);
    }

    result.curve.returns.push_back(state.score);
    result.curve.map_index.push_back(mi);
    if (kind == AgentKind::ModelFree && (!best_q[mi] || state.score > best_return[mi])) {
      best_return[mi] = state.score;
      best_q[mi] = q;
    }
  }

  PolicyArtifact& art = result.artifact;
  art.kind = kind;
  art.config = config;
  art.reward = reward;
  art.view_radius = options.view_radius;
  art.seed = seed;
  art.catalog = catalog;
  if (kind == AgentKind::ModelBased) {
    // Final solve without optimism, from scratch so no optimistic value leaks in.
    values.clear();
    const auto stats = value_iteration(flatten(model), config.gamma, values, dense_q,
                                       options.vi_tolerance, options.final_vi_max_sweeps,
                                       options.parallel);
    result.final_vi = stats;
    export_q(model, dense_q, q);
    refresh_worst_successors(model, q);
    art.model = std::move(model);
  }
  if (kind == AgentKind::ModelFree) {
    // Each map keeps the rows it had after its highest-return episode.
    q.clear();
    for (std::size_t mi = 0; mi < catalog.size(); ++mi) {
      if (!best_q[mi]) continue;
      for (const auto& [st, row] : best_q[mi]->sorted_rows()) {
        if (catalog.map_of_tile(st.tile) == mi) q.mutable_row(st) = row;
      }
    }
  }
  art.q = std::move(q);
  return result;
}

// --- Greedy controller ------------------------------------------------------

namespace {

class ArtifactPolicy final : public EpisodePolicy {
 public:
  ArtifactPolicy(std::shared_ptr<const PolicyArtifact> artifact, std::size_t map_index)
      : artifact_(std::move(artifact)), map_index_(map_index) {}

  Action act(const env::Observation& obs, env::Tile agent) override {
    memory_.observe(obs);
    const CompactState s =
        encode_state(obs, artifact_->catalog.global_tile(map_index_, agent), memory_,
                     artifact_->config.cue_bins);
    if (artifact_->has_model()) {
      return plan_action(artifact_->model, artifact_->q, s, artifact_->config, rng_);
    }
    return artifact_->q.greedy(s);
  }

 private:
  std::shared_ptr<const PolicyArtifact> artifact_;
  std::size_t map_index_;
  AgentMemory memory_;
  std::mt19937_64 rng_{0};
};

}  // namespace

std::unique_ptr<EpisodePolicy> make_greedy_policy(std::shared_ptr<const PolicyArtifact> artifact,
                                                  const env::WorldMap& map) {
  if (!artifact) throw ParameterError("no policy artifact");
  const std::size_t mi = artifact->catalog.find(map);
  return std::make_unique<ArtifactPolicy>(std::move(artifact), mi);
}

PolicyFactory greedy_policy_factory(std::shared_ptr<const PolicyArtifact> artifact) {
  return [artifact](const env::WorldMap& map) { return make_greedy_policy(artifact, map); };
}

// --- Artifact serialization -------------------------------------------------

namespace {

using nlohmann::json;

json state_json(const CompactState& s) {
  return json::array({s.tile, static_cast<int>(s.patch), s.cue_bin, s.other_fresh ? 1 : 0,
                      static_cast<int>(s.last_patch)});
}

PatchId patch_from_int(int v) {
  if (v < 0 || v > 2) throw ParseError("patch id out of range");
  return static_cast<PatchId>(v);
}

CompactState state_from_json(const json& j, std::size_t offset = 0) {
  CompactState s;
  s.tile = j.at(offset + 0).get<std::uint32_t>();
  s.patch = patch_from_int(j.at(offset + 1).get<int>());
  s.cue_bin = j.at(offset + 2).get<std::uint16_t>();
  s.other_fresh = j.at(offset + 3).get<int>() != 0;
  s.last_patch = patch_from_int(j.at(offset + 4).get<int>());
  return s;
}

}  // namespace

std::string artifact_to_json(const PolicyArtifact& art) {
  json j;
  j["format"] = "forage-policy";
  j["version"] = PolicyArtifact::kVersion;
  j["kind"] = to_string(art.kind);
  j["seed"] = art.seed;
  j["view_radius"] = art.view_radius;
  j["reward"] = {{"N", art.reward.peak}, {"lambda", art.reward.decay}};
  j["config"] = {{"alpha", art.config.alpha},
                 {"epsilon", art.config.epsilon},
                 {"gamma", art.config.gamma},
                 {"horizon", art.config.horizon},
                 {"lambda_return", art.config.lambda_return},
                 {"cue_bins", art.config.cue_bins},
                 {"episodes", art.config.episodes}};
  auto maps = json::array();
  for (const auto& m : art.catalog.maps()) maps.push_back(json::parse(env::map_to_json(m)));
  j["maps"] = std::move(maps);

  auto rows = json::array();
  for (const auto& [s, row] : art.q.sorted_rows()) {
    json r = state_json(s);
    for (const double v : row) r.push_back(v);
    rows.push_back(std::move(r));
  }
  j["q_table"] = std::move(rows);

  if (art.has_model()) {
    auto states = json::array();
    auto transitions = json::array();
    for (StateId s = 0; s < art.model.size(); ++s) {
      states.push_back(state_json(art.model.state(s)));
      for (std::size_t a = 0; a < kA; ++a) {
        const ActionModel& am = art.model.action_model(s, env::kActions[a]);
        if (!am.known()) continue;
        auto succ = json::array();
        for (const auto& x : am.successors) {
          succ.push_back(x.next);
          succ.push_back(x.count);
        }
        transitions.push_back(json::array({s, a, am.visits, am.reward_sum, std::move(succ)}));
      }
    }
    j["world_model"] = {{"states", std::move(states)}, {"transitions", std::move(transitions)}};
  }
  return j.dump() + "\n";
}

PolicyArtifact artifact_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("policy artifact is not valid JSON: ") + e.what());
  }
  try {
    if (j.value("format", std::string{}) != "forage-policy") {
      throw ParseError("not a forage-policy document");
    }
    if (j.at("version").get<int>() != PolicyArtifact::kVersion) {
      throw ParseError("unsupported policy artifact version");
    }
    PolicyArtifact art;
    art.kind = parse_agent_kind(j.at("kind").get<std::string>());
    art.seed = j.at("seed").get<std::uint64_t>();
    art.view_radius = j.at("view_radius").get<int>();
    art.reward.peak = j.at("reward").at("N").get<double>();
    art.reward.decay = j.at("reward").at("lambda").get<double>();
    const auto& c = j.at("config");
    art.config.alpha = c.at("alpha").get<double>();
    art.config.epsilon = c.at("epsilon").get<double>();
    art.config.gamma = c.at("gamma").get<double>();
    art.config.horizon = c.at("horizon").get<int>();
    art.config.lambda_return = c.at("lambda_return").get<double>();
    art.config.cue_bins = c.at("cue_bins").get<int>();
    art.config.episodes = c.at("episodes").get<std::size_t>();
    art.config.validate();
    art.reward.validate();

    std::vector<env::WorldMap> maps;
    for (const auto& m : j.at("maps")) maps.push_back(env::map_from_json(m.dump()));
    art.catalog = MapCatalog(std::move(maps));

    for (const auto& r : j.at("q_table")) {
      const CompactState s = state_from_json(r);
      QRow row{};
      for (std::size_t a = 0; a < kA; ++a) row[a] = r.at(5 + a).get<double>();
      art.q.mutable_row(s) = row;
    }
    if (art.has_model()) {
      const auto& wm = j.at("world_model");
      for (const auto& s : wm.at("states")) art.model.intern(state_from_json(s));
      for (const auto& t : wm.at("transitions")) {
        const auto sid = t.at(0).get<StateId>();
        const auto a = t.at(1).get<std::size_t>();
        if (sid >= art.model.size() || a >= kA) throw ParseError("transition index out of range");
        ActionModel am;
        am.visits = t.at(2).get<std::uint32_t>();
        am.reward_sum = t.at(3).get<double>();
        const auto& succ = t.at(4);
        for (std::size_t k = 0; k + 1 < succ.size(); k += 2) {
          am.successors.push_back({succ.at(k).get<StateId>(), succ.at(k + 1).get<std::uint32_t>()});
        }
        art.model.set_action_model(sid, env::kActions[a], std::move(am));
      }
      refresh_worst_successors(art.model, art.q);
    }
    return art;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed policy artifact: ") + e.what());
  }
}

void save_artifact(const PolicyArtifact& artifact, const std::string& path) {
  io::write_text_file(path, artifact_to_json(artifact));
}

PolicyArtifact load_artifact(const std::string& path) {
  return artifact_from_json(io::read_text_file(path));
}

}  // namespace forage::agents
