#pragma once

// Probe experiments and the statistics reported on them.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "forage/agents.hpp"
#include "forage/env.hpp"
#include "forage/mvt.hpp"

namespace forage::eval {

struct ExperimentConfig {
  std::vector<int> distances{3, 5, 7, 9};
  std::size_t repetitions = 25;
  std::size_t steps = 1500;            ///< per probe episode
  std::size_t occupancy_steps = 1000;  ///< per occupancy episode
  std::uint64_t master_seed = 0;

  void validate() const;
};

struct EpisodeRecord {
  std::size_t replication = 0;
  std::uint64_t seed = 0;
  std::vector<env::StepLog> logs;
  double score = 0.0;
  bool operator==(const EpisodeRecord&) const = default;
};

/// Runs `repetitions` independent episodes of `steps` steps on `map`.
/// Replication i uses env seed derive_seed(master_seed, i) and a fresh
/// controller from `factory`.
std::vector<EpisodeRecord> run_probe(const agents::PolicyFactory& factory,
                                     const env::WorldMap& map, std::size_t repetitions,
                                     std::size_t steps, std::uint64_t master_seed,
                                     const mvt::RewardParams& reward = {},
                                     int view_radius = env::kDefaultViewRadius,
                                     bool parallel = true);

/// Greedy probe of a trained artifact. Throws CompatibilityError when the
/// map is not one the artifact was trained on.
std::vector<EpisodeRecord> run_probe(std::shared_ptr<const agents::PolicyArtifact> artifact,
                                     const env::WorldMap& map, std::size_t repetitions,
                                     std::size_t steps, std::uint64_t master_seed,
                                     bool parallel = true);

/// Lengths of maximal in-patch runs within one patch, in order.
std::vector<std::size_t> visit_lengths(std::span<const env::StepLog> logs);

/// Quantile with linear interpolation between closest ranks:
/// position (n - 1) * p in the sorted sample.
double quantile(std::span<const double> sorted, double p);

struct BoxStats {
  std::size_t count = 0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_lo = 0.0;  ///< max(q1 - 1.5 IQR, min)
  double whisker_hi = 0.0;  ///< min(q3 + 1.5 IQR, max)
  std::vector<double> outliers;  ///< strictly outside the whiskers, ascending
  double mean = 0.0;
  std::vector<double> sorted;    ///< the sample itself
};

/// Throws InsufficientDataError on an empty sample.
BoxStats box_stats(std::vector<double> sample);

/// Box statistics over all visit lengths of all records.
BoxStats residence_statistics(std::span<const EpisodeRecord> records);
BoxStats score_statistics(std::span<const EpisodeRecord> records);

struct MvtComparison {
  int x_bar = 0;
  std::size_t n_star = 0;
  double mean_residence = 0.0;
  double median_residence = 0.0;
  bool within_quartile_band = false;  ///< q1 <= n* <= q3
  double deviation = 0.0;             ///< mean - n*
  double mean_abs_deviation = 0.0;    ///< mean over visits of |length - n*|
};

MvtComparison compare_to_mvt(const BoxStats& residence, const mvt::MvtSolution& solution,
                             int x_bar);

struct OccupancyGrid {
  int width = 0;
  int height = 0;
  std::vector<std::uint64_t> counts;  ///< row-major
  std::uint64_t total = 0;

  std::uint64_t at(int x, int y) const {
    return counts[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
};

/// Counts every logged position. Throws InsufficientDataError on no records.
OccupancyGrid occupancy_map(std::span<const EpisodeRecord> records, const env::WorldMap& map,
                            bool parallel = true);

enum class EmaForm {
  Standard,  ///< s_i = (1 - w) x_i + w s_{i-1}
  Literal,   ///< s_i = w x_i + (1 - w) x_{i-1}
};

std::vector<double> ema_smooth(std::span<const double> series, double omega,
                               EmaForm form = EmaForm::Standard);

struct CurveSummary {
  std::vector<double> mean;
  std::vector<double> stddev;  ///< population standard deviation
};

/// Per-episode mean and spread across runs of equal length.
CurveSummary aggregate_curves(std::span<const std::vector<double>> runs);

struct DreamStart {
  std::size_t map_index = 0;
  env::PatchId patch = env::PatchId::None;
  std::size_t compared = 0;                 ///< imagined steps checked
  std::optional<std::size_t> truncated_at;  ///< 0 when the start itself is unknown
};

struct DreamFidelity {
  int horizon = 0;
  std::vector<DreamStart> starts;
  std::size_t compared = 0;
  double max_cue_err = 0.0;
  double mean_cue_err = 0.0;
  double max_reward_err = 0.0;
  double mean_reward_err = 0.0;
  bool truncated = false;
};

/// Dreams a Stay script of `horizon` steps from a freshly entered patch
/// (each patch of each catalog map, entered straight from spawn) and
/// compares predicted reward and cue against the environment. The
/// predicted cue is the centre of the predicted cue bin, 0 outside a patch.
DreamFidelity dream_fidelity(const agents::PolicyArtifact& artifact, int horizon);

struct FeatureRow {
  std::uint32_t tile_index = 0;
  env::PatchId patch_id = env::PatchId::None;
  std::uint16_t cue_bin = 0;
  bool other_fresh = false;
  double state_value = 0.0;
  env::PatchId last_patch = env::PatchId::None;
  bool operator==(const FeatureRow&) const = default;
};

/// One row per logged step: the agent's compact state after that step and
/// its value under the artifact.
std::vector<FeatureRow> latent_feature_dump(const agents::PolicyArtifact& artifact,
                                            const env::WorldMap& map,
                                            std::span<const EpisodeRecord> records);

inline constexpr std::string_view kFeatureHeader =
    "tile_index,patch_id,cue_bin,other_fresh,state_value,last_patch";
std::string features_to_csv(std::span<const FeatureRow> rows);

inline constexpr std::string_view kCurveHeader = "episode,return,smoothed_return";
std::string curve_to_csv(std::span<const double> returns, double omega,
                         EmaForm form = EmaForm::Standard);

struct PgmImage {
  std::string text;   ///< P2 file contents
  double scale = 0.0; ///< pixel = round(count * scale)
};

PgmImage occupancy_to_pgm(const OccupancyGrid& grid);
std::string occupancy_to_csv(const OccupancyGrid& grid);

struct ScenarioReport {
  int x_bar = 0;
  mvt::MvtSolution solution;
  BoxStats residence;
  BoxStats scores;
  MvtComparison comparison;
  std::optional<OccupancyGrid> occupancy;
};

struct Report {
  std::string agent_kind;
  std::vector<ScenarioReport> scenarios;
  std::optional<DreamFidelity> dream;
  nlohmann::ordered_json config_echo = nlohmann::ordered_json::object();
};

/// Probe, compare and count for every configured distance.
Report build_report(std::shared_ptr<const agents::PolicyArtifact> artifact,
                    const ExperimentConfig& config, int dream_horizon, bool parallel = true);

nlohmann::ordered_json report_to_json(const Report& report);

/// Writes report.json plus occupancy_x<d>.pgm / .csv under `dir`.
/// Throws IoError when the directory cannot be written.
void export_report(const Report& report, const std::string& dir);

}  // namespace forage::eval
