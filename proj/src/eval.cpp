#include "forage/eval.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <limits>
#include <numeric>
#include <sstream>

#include "forage/error.hpp"
#include "forage/io.hpp"
#include "forage/kernels.hpp"

namespace forage::eval {

using nlohmann::ordered_json;

void ExperimentConfig::validate() const {
  if (distances.empty()) throw ParameterError("at least one scenario distance is required");
  for (const int d : distances) {
    if (d < 1) throw ParameterError("scenario distances must be at least 1");
  }
  if (repetitions < 1) throw ParameterError("repetitions must be at least 1");
  if (steps < 1) throw ParameterError("probe episodes need at least one step");
  if (occupancy_steps < 1) throw ParameterError("occupancy episodes need at least one step");
}

// --- Probes -----------------------------------------------------------------

namespace {

EpisodeRecord run_one(const agents::PolicyFactory& factory,
                      const std::shared_ptr<const env::WorldMap>& map, std::size_t rep,
                      std::uint64_t master_seed, const mvt::RewardParams& reward,
                      int view_radius) {
  EpisodeRecord rec;
  rec.replication = rep;
  rec.seed = env::derive_seed(master_seed, rep);
  auto policy = factory(*map);
  auto [state, obs] = env::reset(map, rec.seed, reward, view_radius);
  rec.logs.reserve(map->episode_length());
  while (!state.done()) {
    const auto out = env::step(state, policy->act(obs, state.agent));
    rec.logs.push_back(env::make_log(state, out));
    obs = out.observation;
  }
  rec.score = state.score;
  return rec;
}

}  // namespace

std::vector<EpisodeRecord> run_probe(const agents::PolicyFactory& factory,
                                     const env::WorldMap& map, std::size_t repetitions,
                                     std::size_t steps, std::uint64_t master_seed,
                                     const mvt::RewardParams& reward, int view_radius,
                                     bool parallel) {
  if (repetitions < 1) throw ParameterError("repetitions must be at least 1");
  if (steps < 1) throw ParameterError("probe episodes need at least one step");
  const auto probe_map = std::make_shared<const env::WorldMap>(map.with_episode_length(steps));
  // Surface compatibility problems before any worker starts.
  factory(*probe_map);

  std::vector<EpisodeRecord> records(repetitions);
  if (!parallel) {
    for (std::size_t i = 0; i < repetitions; ++i) {
      records[i] = run_one(factory, probe_map, i, master_seed, reward, view_radius);
    }
    return records;
  }
  std::vector<std::exception_ptr> errors(repetitions);
  const auto n = static_cast<std::int64_t>(repetitions);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto rep = static_cast<std::size_t>(i);
    try {
      records[rep] = run_one(factory, probe_map, rep, master_seed, reward, view_radius);
    } catch (...) {
      errors[rep] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return records;
}

std::vector<EpisodeRecord> run_probe(std::shared_ptr<const agents::PolicyArtifact> artifact,
                                     const env::WorldMap& map, std::size_t repetitions,
                                     std::size_t steps, std::uint64_t master_seed,
                                     bool parallel) {
  if (!artifact) throw ParameterError("no policy artifact");
  return run_probe(agents::greedy_policy_factory(artifact), map, repetitions, steps, master_seed,
                   artifact->reward, artifact->view_radius, parallel);
}

// --- Statistics -------------------------------------------------------------

std::vector<std::size_t> visit_lengths(std::span<const env::StepLog> logs) {
  std::vector<std::size_t> out;
  std::size_t run = 0;
  env::PatchId current = env::PatchId::None;
  for (const auto& log : logs) {
    if (log.in_patch && log.patch_id == current) {
      ++run;
      continue;
    }
    if (run > 0) out.push_back(run);
    run = log.in_patch ? 1 : 0;
    current = log.in_patch ? log.patch_id : env::PatchId::None;
  }
  if (run > 0) out.push_back(run);
  return out;
}

double quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InsufficientDataError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("quantile level must lie in [0, 1]");
  const double pos = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BoxStats box_stats(std::vector<double> sample) {
  if (sample.empty()) throw InsufficientDataError("no observations to summarize");
  std::sort(sample.begin(), sample.end());
  BoxStats b;
  b.count = sample.size();
  b.q1 = quantile(sample, 0.25);
  b.median = quantile(sample, 0.5);
  b.q3 = quantile(sample, 0.75);
  const double iqr = b.q3 - b.q1;
  b.whisker_lo = std::max(b.q1 - 1.5 * iqr, sample.front());
  b.whisker_hi = std::min(b.q3 + 1.5 * iqr, sample.back());
  for (const double x : sample) {
    if (x < b.whisker_lo || x > b.whisker_hi) b.outliers.push_back(x);
  }
  b.mean = std::accumulate(sample.begin(), sample.end(), 0.0) / static_cast<double>(b.count);
  b.sorted = std::move(sample);
  return b;
}

BoxStats residence_statistics(std::span<const EpisodeRecord> records) {
  std::vector<double> lengths;
  for (const auto& rec : records) {
    for (const auto len : visit_lengths(rec.logs)) lengths.push_back(static_cast<double>(len));
  }
  if (lengths.empty()) throw InsufficientDataError("no patch visits in the probe records");
  return box_stats(std::move(lengths));
}

BoxStats score_statistics(std::span<const EpisodeRecord> records) {
  std::vector<double> scores;
  for (const auto& rec : records) scores.push_back(rec.score);
  return box_stats(std::move(scores));
}

MvtComparison compare_to_mvt(const BoxStats& residence, const mvt::MvtSolution& solution,
                             int x_bar) {
  MvtComparison c;
  c.x_bar = x_bar;
  c.n_star = solution.optimal_steps;
  c.mean_residence = residence.mean;
  c.median_residence = residence.median;
  const auto n_star = static_cast<double>(c.n_star);
  c.within_quartile_band = residence.q1 <= n_star && n_star <= residence.q3;
  c.deviation = residence.mean - n_star;
  double abs_sum = 0.0;
  for (const double len : residence.sorted) abs_sum += std::abs(len - n_star);
  c.mean_abs_deviation =
      residence.sorted.empty() ? 0.0 : abs_sum / static_cast<double>(residence.sorted.size());
  return c;
}

OccupancyGrid occupancy_map(std::span<const EpisodeRecord> records, const env::WorldMap& map,
                            bool parallel) {
  if (records.empty()) throw InsufficientDataError("occupancy needs at least one record");
  std::vector<std::uint32_t> cells;
  for (const auto& rec : records) {
    for (const auto& log : rec.logs) {
      const env::Tile t{log.x, log.y};
      if (!map.in_bounds(t)) throw GeometryError("logged position lies outside the map");
      cells.push_back(static_cast<std::uint32_t>(map.tile_index(t)));
    }
  }
  OccupancyGrid g;
  g.width = map.width();
  g.height = map.height();
  g.counts.assign(map.tile_count(), 0);
  if (parallel) {
    kernels::count_cells_parallel(cells, g.counts);
  } else {
    kernels::count_cells_serial(cells, g.counts);
  }
  g.total = cells.size();
  return g;
}

std::vector<double> ema_smooth(std::span<const double> series, double omega, EmaForm form) {
  if (series.empty()) throw InsufficientDataError("cannot smooth an empty series");
  if (!(omega >= 0.0 && omega <= 1.0)) throw ParameterError("omega must lie in [0, 1]");
  std::vector<double> out(series.size());
  out[0] = series[0];
  for (std::size_t i = 1; i < series.size(); ++i) {
    out[i] = form == EmaForm::Standard ? (1.0 - omega) * series[i] + omega * out[i - 1]
                                       : omega * series[i] + (1.0 - omega) * series[i - 1];
  }
  return out;
}

CurveSummary aggregate_curves(std::span<const std::vector<double>> runs) {
  if (runs.empty()) throw InsufficientDataError("no learning curves to aggregate");
  const std::size_t len = runs.front().size();
  for (const auto& r : runs) {
    if (r.size() != len) throw ShapeError("learning curves differ in length");
  }
  CurveSummary s;
  s.mean.assign(len, 0.0);
  s.stddev.assign(len, 0.0);
  const auto k = static_cast<double>(runs.size());
  for (std::size_t i = 0; i < len; ++i) {
    for (const auto& r : runs) s.mean[i] += r[i];
    s.mean[i] /= k;
    for (const auto& r : runs) s.stddev[i] += (r[i] - s.mean[i]) * (r[i] - s.mean[i]);
    s.stddev[i] = std::sqrt(s.stddev[i] / k);
  }
  return s;
}

// --- Dreams -----------------------------------------------------------------

namespace {

double predicted_cue(const agents::CompactState& s, int bins) {
  if (s.patch == env::PatchId::None) return 0.0;
  return (static_cast<double>(s.cue_bin) + 0.5) / static_cast<double>(bins);
}

}  // namespace

DreamFidelity dream_fidelity(const agents::PolicyArtifact& artifact, int horizon) {
  if (horizon < 1) throw ParameterError("dream horizon must be at least 1");
  if (!artifact.has_model()) throw CompatibilityError("policy artifact carries no world model");
  const int bins = artifact.config.cue_bins;
  DreamFidelity report;
  report.horizon = horizon;
  double cue_sum = 0.0;
  double reward_sum = 0.0;

  for (std::size_t mi = 0; mi < artifact.catalog.size(); ++mi) {
    const auto& base = artifact.catalog.maps()[mi];
    const auto map = std::make_shared<const env::WorldMap>(base.with_episode_length(
        base.episode_length() + static_cast<std::size_t>(horizon) + base.width()));
    for (const auto& [patch, toward] : {std::pair{env::PatchId::A, env::Action::Left},
                                       std::pair{env::PatchId::B, env::Action::Right}}) {
      DreamStart start;
      start.map_index = mi;
      start.patch = patch;
      auto [state, obs] = env::reset(map, 0, artifact.reward, artifact.view_radius);
      agents::AgentMemory memory;
      memory.observe(obs);
      while (!obs.in_patch) {
        obs = env::step(state, toward).observation;
        memory.observe(obs);
      }
      const auto s0 = agents::encode_state(obs, artifact.catalog.global_tile(mi, state.agent),
                                           memory, bins);
      std::optional<agents::ImaginedTrajectory> dream;
      try {
        dream = agents::imagine_rollout(
            artifact.model, artifact.q, s0,
            [](const agents::CompactState&, std::size_t) { return env::Action::Stay; },
            horizon);
      } catch (const UnknownStateError&) {
        start.truncated_at = 0;
      }
      if (dream) {
        start.truncated_at = dream->truncated_at;
        for (const auto& step : dream->steps) {
          const auto truth = env::step(state, env::Action::Stay);
          const double cue_err = std::abs(predicted_cue(step.next, bins) - truth.observation.cue);
          const double reward_err = std::abs(step.reward - truth.reward);
          report.max_cue_err = std::max(report.max_cue_err, cue_err);
          report.max_reward_err = std::max(report.max_reward_err, reward_err);
          cue_sum += cue_err;
          reward_sum += reward_err;
          ++start.compared;
        }
      }
      if (start.truncated_at) report.truncated = true;
      report.compared += start.compared;
      report.starts.push_back(start);
    }
  }
  if (report.compared > 0) {
    report.mean_cue_err = cue_sum / static_cast<double>(report.compared);
    report.mean_reward_err = reward_sum / static_cast<double>(report.compared);
  }
  return report;
}

// --- Feature export ---------------------------------------------------------

std::vector<FeatureRow> latent_feature_dump(const agents::PolicyArtifact& artifact,
                                            const env::WorldMap& map,
                                            std::span<const EpisodeRecord> records) {
  if (records.empty()) throw InsufficientDataError("feature dump needs at least one record");
  const std::size_t mi = artifact.catalog.find(map);
  std::vector<FeatureRow> rows;
  for (const auto& rec : records) {
    agents::AgentMemory memory;
    for (const auto& log : rec.logs) {
      env::Observation obs;
      obs.in_patch = log.in_patch;
      obs.patch = log.patch_id;
      obs.cue = log.cue;
      memory.observe(obs);
      const auto s = agents::encode_state(
          obs, artifact.catalog.global_tile(mi, env::Tile{log.x, log.y}), memory,
          artifact.config.cue_bins);
      FeatureRow row;
      row.tile_index = s.tile;
      row.patch_id = s.patch;
      row.cue_bin = s.cue_bin;
      row.other_fresh = s.other_fresh;
      row.last_patch = s.last_patch;
      row.state_value = artifact.has_model() ? agents::state_value(artifact.model, artifact.q, s)
                                             : artifact.q.max_value(s);
      rows.push_back(row);
    }
  }
  return rows;
}

std::string features_to_csv(std::span<const FeatureRow> rows) {
  std::ostringstream out;
  out << kFeatureHeader << '\n';
  for (const auto& r : rows) {
    out << r.tile_index << ',' << static_cast<int>(r.patch_id) << ',' << r.cue_bin << ','
        << (r.other_fresh ? 1 : 0) << ',' << io::format_number(r.state_value) << ','
        << static_cast<int>(r.last_patch) << '\n';
  }
  return out.str();
}

std::string curve_to_csv(std::span<const double> returns, double omega, EmaForm form) {
  std::ostringstream out;
  out << kCurveHeader << '\n';
  if (returns.empty()) return out.str();
  const auto smooth = ema_smooth(returns, omega, form);
  for (std::size_t i = 0; i < returns.size(); ++i) {
    out << i + 1 << ',' << io::format_number(returns[i]) << ','
        << io::format_number(smooth[i]) << '\n';
  }
  return out.str();
}

PgmImage occupancy_to_pgm(const OccupancyGrid& grid) {
  const std::uint64_t peak =
      grid.counts.empty() ? 0 : *std::max_element(grid.counts.begin(), grid.counts.end());
  PgmImage img;
  img.scale = peak == 0 ? 0.0 : 255.0 / static_cast<double>(peak);
  std::ostringstream out;
  out << "P2\n" << grid.width << ' ' << grid.height << "\n255\n";
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < grid.width; ++x) {
      if (x > 0) out << ' ';
      out << std::lround(static_cast<double>(grid.at(x, y)) * img.scale);
    }
    out << '\n';
  }
  img.text = out.str();
  return img;
}

std::string occupancy_to_csv(const OccupancyGrid& grid) {
  std::ostringstream out;
  out << "x,y,count\n";
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < grid.width; ++x) out << x << ',' << y << ',' << grid.at(x, y) << '\n';
  }
  return out.str();
}

// --- Report -----------------------------------------------------------------

namespace {

const env::WorldMap& catalog_map(const agents::MapCatalog& catalog, int distance) {
  for (const auto& m : catalog.maps()) {
    if (m.distance() == distance) return m;
  }
  throw CompatibilityError("policy was not trained on a map with distance " +
                           std::to_string(distance));
}

}  // namespace

Report build_report(std::shared_ptr<const agents::PolicyArtifact> artifact,
                    const ExperimentConfig& config, int dream_horizon, bool parallel) {
  if (!artifact) throw ParameterError("no policy artifact");
  config.validate();
  Report report;
  report.agent_kind = agents::to_string(artifact->kind);
  for (std::size_t k = 0; k < config.distances.size(); ++k) {
    const int d = config.distances[k];
    const auto& map = catalog_map(artifact->catalog, d);
    ScenarioReport sc;
    sc.x_bar = d;
    sc.solution = mvt::optimal_residence(artifact->reward, d);
    // Each scenario and protocol draws from its own seed stream.
    const auto probe_seed = env::derive_seed(config.master_seed, 2 * k);
    const auto occ_seed = env::derive_seed(config.master_seed, 2 * k + 1);
    const auto records =
        run_probe(artifact, map, config.repetitions, config.steps, probe_seed, parallel);
    sc.scores = score_statistics(records);
    try {
      sc.residence = residence_statistics(records);
      sc.comparison = compare_to_mvt(sc.residence, sc.solution, d);
    } catch (const InsufficientDataError&) {
      // No visits: the comparison stays empty and the band flag false.
      sc.comparison.x_bar = d;
      sc.comparison.n_star = sc.solution.optimal_steps;
      sc.comparison.mean_abs_deviation = std::numeric_limits<double>::infinity();
    }
    const auto occ =
        run_probe(artifact, map, config.repetitions, config.occupancy_steps, occ_seed, parallel);
    sc.occupancy = occupancy_map(occ, map, parallel);
    report.scenarios.push_back(std::move(sc));
  }
  if (artifact->has_model()) report.dream = dream_fidelity(*artifact, dream_horizon);
  return report;
}

namespace {

ordered_json number_or_null(double x) { return std::isfinite(x) ? ordered_json(x) : ordered_json(); }

ordered_json box_to_json(const BoxStats& b) {
  ordered_json j;
  if (b.count == 0) {
    j["count"] = 0;
    return j;
  }
  j["count"] = b.count;
  j["median"] = b.median;
  j["q1"] = b.q1;
  j["q3"] = b.q3;
  j["whisker_lo"] = b.whisker_lo;
  j["whisker_hi"] = b.whisker_hi;
  j["outliers"] = b.outliers;
  j["mean"] = b.mean;
  return j;
}

}  // namespace

ordered_json report_to_json(const Report& report) {
  ordered_json j;
  j["agent_kind"] = report.agent_kind;
  j["scenarios"] = ordered_json::array();
  for (const auto& sc : report.scenarios) {
    ordered_json s;
    s["x_bar"] = sc.x_bar;
    s["n_star"] = sc.solution.optimal_steps;
    s["mvt_rate"] = sc.solution.optimal_rate;
    s["residence_stats"] = box_to_json(sc.residence);
    s["scores"] = box_to_json(sc.scores);
    s["within_quartile_band"] = sc.comparison.within_quartile_band;
    s["mean_residence"] = number_or_null(sc.residence.count ? sc.comparison.mean_residence
                                                            : std::nan(""));
    s["deviation"] = number_or_null(sc.residence.count ? sc.comparison.deviation : std::nan(""));
    s["mean_abs_deviation"] = number_or_null(sc.comparison.mean_abs_deviation);
    if (sc.occupancy) {
      s["occupancy_total"] = sc.occupancy->total;
      s["occupancy_scale"] = occupancy_to_pgm(*sc.occupancy).scale;
    }
    j["scenarios"].push_back(std::move(s));
  }
  if (report.dream) {
    const auto& d = *report.dream;
    ordered_json dj;
    dj["horizon"] = d.horizon;
    dj["compared_steps"] = d.compared;
    dj["max_cue_err"] = d.max_cue_err;
    dj["mean_cue_err"] = d.mean_cue_err;
    dj["max_reward_err"] = d.max_reward_err;
    dj["mean_reward_err"] = d.mean_reward_err;
    dj["truncated"] = d.truncated;
    j["dream_fidelity"] = std::move(dj);
  }
  j["config_echo"] = report.config_echo;
  return j;
}

void export_report(const Report& report, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  const std::filesystem::path root(dir);
  io::write_text_file((root / "report.json").string(), report_to_json(report).dump(2) + "\n");
  for (const auto& sc : report.scenarios) {
    if (!sc.occupancy) continue;
    const std::string stem = "occupancy_x" + std::to_string(sc.x_bar);
    io::write_text_file((root / (stem + ".pgm")).string(), occupancy_to_pgm(*sc.occupancy).text);
    io::write_text_file((root / (stem + ".csv")).string(), occupancy_to_csv(*sc.occupancy));
  }
}

}  // namespace forage::eval
