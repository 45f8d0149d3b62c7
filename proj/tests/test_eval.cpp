#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <sstream>

#include "forage/error.hpp"
#include "forage/eval.hpp"
#include "forage/io.hpp"

using namespace forage;
using namespace forage::eval;
using env::Action;
using env::PatchId;

namespace {

// Stays exactly k in-patch steps, then walks to the other patch.
class FixedResidence final : public agents::EpisodePolicy {
 public:
  explicit FixedResidence(std::size_t k) : k_(k) {}
  Action act(const env::Observation& obs, env::Tile) override {
    if (!obs.in_patch) {
      was_in_ = false;
      return heading_;
    }
    count_ = was_in_ ? count_ + 1 : 1;
    was_in_ = true;
    if (count_ < k_) return Action::Stay;
    heading_ = obs.patch == PatchId::A ? Action::Right : Action::Left;
    return heading_;
  }

 private:
  std::size_t k_;
  std::size_t count_ = 0;
  bool was_in_ = false;
  Action heading_ = Action::Left;
};

class StayPut final : public agents::EpisodePolicy {
 public:
  Action act(const env::Observation&, env::Tile) override { return Action::Stay; }
};

agents::PolicyFactory fixed_residence(std::size_t k) {
  return [k](const env::WorldMap&) { return std::make_unique<FixedResidence>(k); };
}

// Type-7 quartile by integer position arithmetic: (n - 1) / 4 split into
// whole and quarter parts.
double quartile_oracle(const std::vector<double>& sorted, int which) {
  const std::size_t scaled = (sorted.size() - 1) * static_cast<std::size_t>(which);
  const std::size_t j = scaled / 4;
  const std::size_t r = scaled % 4;
  if (r == 0) return sorted[j];
  return sorted[j] + (static_cast<double>(r) / 4.0) * (sorted[j + 1] - sorted[j]);
}

std::vector<env::StepLog> logs_from(const std::string& pattern) {
  std::vector<env::StepLog> logs;
  for (char c : pattern) {
    env::StepLog l;
    l.in_patch = c != '.';
    l.patch_id = c == 'A' ? PatchId::A : c == 'B' ? PatchId::B : PatchId::None;
    logs.push_back(l);
  }
  return logs;
}

std::shared_ptr<const agents::PolicyArtifact> tiny_artifact(agents::AgentKind kind) {
  agents::AgentConfig cfg;
  cfg.episodes = 2;
  const std::vector<env::WorldMap> maps{env::build_map(3, 3, 1, 100), env::build_map(5, 3, 1, 100)};
  return std::make_shared<const agents::PolicyArtifact>(
      agents::train(kind, maps, cfg, {}, 5).artifact);
}

}  // namespace

TEST(VisitLengths, SegmentsMaximalRuns) {
  EXPECT_EQ(visit_lengths(logs_from("..AAA..BB.A")), (std::vector<std::size_t>{3, 2, 1}));
  EXPECT_EQ(visit_lengths(logs_from("AABB")), (std::vector<std::size_t>{2, 2}));
  EXPECT_TRUE(visit_lengths(logs_from("....")).empty());
}

TEST(VisitLengths, SumEqualsInPatchSteps) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> pick(0, 2);
  for (int trial = 0; trial < 100; ++trial) {
    std::string p;
    for (int i = 0; i < 200; ++i) p.push_back(".AB"[pick(rng)]);
    const auto lengths = visit_lengths(logs_from(p));
    std::size_t sum = 0;
    for (auto n : lengths) sum += n;
    EXPECT_EQ(sum, static_cast<std::size_t>(std::count_if(p.begin(), p.end(), [](char c) { return c != '.'; })));
  }
}

TEST(BoxStats, MatchesBruteForceOracle) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> size(1, 60);
  std::uniform_real_distribution<double> value(0.0, 100.0);
  std::bernoulli_distribution spike(0.05);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> data(static_cast<std::size_t>(size(rng)));
    for (auto& x : data) x = spike(rng) ? value(rng) * 20 : value(rng);
    const auto b = box_stats(data);
    std::vector<double> sorted = data;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(b.q1, quartile_oracle(sorted, 1));
    EXPECT_EQ(b.median, quartile_oracle(sorted, 2));
    EXPECT_EQ(b.q3, quartile_oracle(sorted, 3));
    const double iqr = b.q3 - b.q1;
    const double lo = std::max(b.q1 - 1.5 * iqr, sorted.front());
    const double hi = std::min(b.q3 + 1.5 * iqr, sorted.back());
    EXPECT_EQ(b.whisker_lo, lo);
    EXPECT_EQ(b.whisker_hi, hi);
    std::vector<double> outliers;
    for (double x : sorted) {
      if (x < lo || x > hi) outliers.push_back(x);
    }
    EXPECT_EQ(b.outliers, outliers);
    EXPECT_LE(b.q1, b.median);
    EXPECT_LE(b.median, b.q3);
  }
}

TEST(BoxStats, WorkedExamples) {
  EXPECT_EQ(box_stats({10, 20, 30}).median, 20.0);
  const auto flat = box_stats({7, 7, 7, 7});
  EXPECT_EQ(flat.q3 - flat.q1, 0.0);
  EXPECT_TRUE(flat.outliers.empty());

  std::vector<double> data;
  for (int i = 1; i <= 100; ++i) data.push_back(i);
  data.push_back(1000);
  const auto b = box_stats(data);
  EXPECT_EQ(b.q1, 26.0);
  EXPECT_EQ(b.q3, 76.0);
  EXPECT_EQ(b.whisker_lo, 1.0);
  EXPECT_EQ(b.whisker_hi, 151.0);
  EXPECT_EQ(b.outliers, std::vector<double>{1000.0});

  EXPECT_EQ(quantile(std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 0.25), 3.25);
  EXPECT_THROW(box_stats({}), InsufficientDataError);
  EXPECT_THROW(quantile(std::vector<double>{1.0}, 1.5), ParameterError);
}

TEST(CompareToMvt, BandAndDeviation) {
  const auto sol = mvt::optimal_residence({}, 5);  // n* = 30
  BoxStats inside;
  inside.q1 = 25;
  inside.q3 = 35;
  inside.mean = 31;
  inside.sorted = {25, 30, 35};
  const auto c = compare_to_mvt(inside, sol, 5);
  EXPECT_TRUE(c.within_quartile_band);
  EXPECT_DOUBLE_EQ(c.deviation, 1.0);
  EXPECT_DOUBLE_EQ(c.mean_abs_deviation, 10.0 / 3.0);

  BoxStats above = inside;
  above.q1 = 35;
  above.q3 = 45;
  above.mean = 40;
  const auto d = compare_to_mvt(above, sol, 5);
  EXPECT_FALSE(d.within_quartile_band);
  EXPECT_DOUBLE_EQ(d.deviation, 10.0);
}

TEST(ScriptedPolicy, ResidesExactlyKSteps) {
  for (int x : {3, 5, 7, 9}) {
    const std::size_t k = mvt::optimal_residence({}, x).optimal_steps;
    const auto map = env::build_map(x, 3, 1);
    // x / 2 corridor steps out of spawn, then whole visit-travel cycles
    // ending on a departure.
    const auto ux = static_cast<std::size_t>(x);
    const std::size_t length = ux / 2 + 8 * (k + ux) - ux;
    const auto records = run_probe(fixed_residence(k), map, 25, length, 3);
    ASSERT_EQ(records.size(), 25u);
    for (const auto& r : records) EXPECT_EQ(r.logs.size(), length);
    const auto b = residence_statistics(records);
    EXPECT_EQ(b.count, 25u * 8u);
    EXPECT_EQ(b.median, static_cast<double>(k));
    EXPECT_EQ(b.q3 - b.q1, 0.0);
    const auto c = compare_to_mvt(b, mvt::optimal_residence({}, x), x);
    EXPECT_EQ(c.deviation, 0.0);
    EXPECT_TRUE(c.within_quartile_band);
  }
}

TEST(RunProbe, DeterministicAndSeeded) {
  const auto map = env::build_map(5);
  const auto a = run_probe(fixed_residence(10), map, 4, 300, 9);
  const auto b = run_probe(fixed_residence(10), map, 4, 300, 9, {}, env::kDefaultViewRadius, false);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a[2].seed, env::derive_seed(9, 2));
  EXPECT_EQ(run_probe(fixed_residence(10), map, 1, 300, 9).size(), 1u);
  EXPECT_THROW(run_probe(fixed_residence(10), map, 0, 300, 9), ParameterError);
}

TEST(RunProbe, IncompatibleMapIsRejected) {
  const auto art = tiny_artifact(agents::AgentKind::ModelFree);
  EXPECT_THROW(run_probe(art, env::build_map(9), 2, 10, 0), CompatibilityError);
}

TEST(Occupancy, TrajectoryProtocolTotal) {
  const auto map = env::build_map(7);
  const auto records = run_probe(fixed_residence(20), map, 25, 1000, 0);
  const auto g = occupancy_map(records, map);
  EXPECT_EQ(g.total, 25000u);
  std::uint64_t sum = 0;
  for (auto c : g.counts) sum += c;
  EXPECT_EQ(sum, 25000u);
  const auto serial = occupancy_map(records, map, false);
  EXPECT_EQ(serial.counts, g.counts);
}

TEST(Occupancy, StationaryAgentFillsOneCell) {
  const auto map = env::build_map(3);
  const agents::PolicyFactory still = [](const env::WorldMap&) { return std::make_unique<StayPut>(); };
  const auto g = occupancy_map(run_probe(still, map, 5, 100, 0), map);
  std::size_t nonzero = 0;
  for (auto c : g.counts) nonzero += c > 0;
  EXPECT_EQ(nonzero, 1u);
  EXPECT_EQ(g.at(map.spawn().x, map.spawn().y), 500u);
  EXPECT_THROW(occupancy_map({}, map), InsufficientDataError);
}

TEST(Ema, HandExampleAndReductions) {
  EXPECT_NEAR(ema_smooth(std::vector<double>{0, 1}, 0.95)[1], 0.05, 1e-15);
  const std::vector<double> x{3, -1, 4, 1, 5};
  EXPECT_EQ(ema_smooth(x, 0.0), x);
  for (double v : ema_smooth(std::vector<double>(20, 2.5), 0.95)) EXPECT_DOUBLE_EQ(v, 2.5);
  EXPECT_THROW(ema_smooth(std::vector<double>{}, 0.5), InsufficientDataError);
  EXPECT_THROW(ema_smooth(x, 1.5), ParameterError);
  // The literal form mixes raw neighbours instead of the running average.
  EXPECT_NEAR(ema_smooth(std::vector<double>{0, 1, 0}, 0.95, EmaForm::Literal)[2], 0.05, 1e-15);
}

TEST(Ema, ConvexCombinationBounds) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-100, 100);
  std::uniform_real_distribution<double> w(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(1 + trial % 50);
    for (auto& v : x) v = u(rng);
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    for (double s : ema_smooth(x, w(rng))) {
      EXPECT_GE(s, *lo - 1e-9);
      EXPECT_LE(s, *hi + 1e-9);
    }
  }
}

TEST(Ema, LargerOmegaSmoothsMore) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> x(500);
  for (auto& v : x) v = u(rng);
  auto roughness = [](const std::vector<double>& s) {
    double r = 0;
    for (std::size_t i = 1; i < s.size(); ++i) r += std::abs(s[i] - s[i - 1]);
    return r;
  };
  EXPECT_LT(roughness(ema_smooth(x, 0.95)), roughness(ema_smooth(x, 0.5)));
}

TEST(AggregateCurves, MeanAndPopulationSpread) {
  const std::vector<std::vector<double>> runs{{1, 2}, {3, 2}, {5, 2}};
  const auto s = aggregate_curves(runs);
  EXPECT_EQ(s.mean, (std::vector<double>{3, 2}));
  EXPECT_DOUBLE_EQ(s.stddev[0], std::sqrt(8.0 / 3.0));
  EXPECT_EQ(s.stddev[1], 0.0);
  const std::vector<std::vector<double>> ragged{{1, 2}, {3}};
  EXPECT_THROW(aggregate_curves(ragged), ShapeError);
}

TEST(DreamFidelity, RejectsBadInputs) {
  const auto mb = tiny_artifact(agents::AgentKind::ModelBased);
  EXPECT_THROW(dream_fidelity(*mb, 0), ParameterError);
  EXPECT_THROW(dream_fidelity(*tiny_artifact(agents::AgentKind::ModelFree), 5), CompatibilityError);
}

TEST(DreamFidelity, UntrainedModelReportsTruncation) {
  agents::PolicyArtifact art;
  art.kind = agents::AgentKind::ModelBased;
  art.catalog = agents::MapCatalog({env::build_map(3)});
  const auto d = dream_fidelity(art, 15);
  EXPECT_TRUE(d.truncated);
  ASSERT_EQ(d.starts.size(), 2u);
  for (const auto& s : d.starts) {
    ASSERT_TRUE(s.truncated_at.has_value());
    EXPECT_EQ(*s.truncated_at, 0u);
  }
  EXPECT_EQ(d.compared, 0u);
}

TEST(Features, OneRowPerStepWithStateValue) {
  const auto art = tiny_artifact(agents::AgentKind::ModelFree);
  const auto map = art->catalog.maps()[0];
  const auto records = run_probe(art, map, 1, 100, 0);
  const auto rows = latent_feature_dump(*art, map, records);
  ASSERT_EQ(rows.size(), 100u);
  const auto again = latent_feature_dump(*art, map, records);
  EXPECT_EQ(rows, again);
  for (const auto& r : rows) {
    agents::CompactState s;
    s.tile = r.tile_index;
    s.patch = r.patch_id;
    s.cue_bin = r.cue_bin;
    s.other_fresh = r.other_fresh;
    s.last_patch = r.last_patch;
    const auto row = art->q.row(s);
    EXPECT_EQ(r.state_value, *std::max_element(row.begin(), row.end()));
  }
  const std::string csv = features_to_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "tile_index,patch_id,cue_bin,other_fresh,state_value,last_patch");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 101);
}

TEST(Export, PgmHeaderMatchesGrid) {
  OccupancyGrid g;
  g.width = 3;
  g.height = 2;
  g.counts = {0, 2, 4, 1, 0, 0};
  g.total = 7;
  const auto img = occupancy_to_pgm(g);
  EXPECT_EQ(img.text, "P2\n3 2\n255\n0 128 255\n64 0 0\n");
  EXPECT_DOUBLE_EQ(img.scale, 255.0 / 4.0);
  EXPECT_EQ(occupancy_to_csv(g), "x,y,count\n0,0,0\n1,0,2\n2,0,4\n0,1,1\n1,1,0\n2,1,0\n");
}

TEST(Export, CurveCsv) {
  const std::vector<double> r{0, 1};
  EXPECT_EQ(curve_to_csv(r, 0.95), "episode,return,smoothed_return\n1,0,0\n2,1,0.05\n");
}

TEST(Report, EmptyScenarioListIsValid) {
  const auto j = report_to_json(Report{});
  EXPECT_TRUE(j.at("scenarios").is_array());
  EXPECT_TRUE(j.at("scenarios").empty());
  EXPECT_FALSE(j.contains("dream_fidelity"));
}

TEST(Report, SchemaAndFiles) {
  ExperimentConfig cfg;
  cfg.distances = {3, 5};
  cfg.repetitions = 3;
  cfg.steps = 60;
  cfg.occupancy_steps = 40;
  for (auto kind : {agents::AgentKind::ModelFree, agents::AgentKind::ModelBased}) {
    const auto art = tiny_artifact(kind);
    const auto report = build_report(art, cfg, 5);
    const auto j = report_to_json(report);
    EXPECT_EQ(j.at("agent_kind"), agents::to_string(kind));
    ASSERT_EQ(j.at("scenarios").size(), 2u);
    for (const auto& s : j.at("scenarios")) {
      for (const char* key : {"x_bar", "n_star", "mvt_rate", "residence_stats", "scores",
                              "within_quartile_band", "mean_residence", "deviation",
                              "mean_abs_deviation", "occupancy_total", "occupancy_scale"}) {
        EXPECT_TRUE(s.contains(key)) << key;
      }
      EXPECT_EQ(s.at("occupancy_total"), 120u);
    }
    EXPECT_EQ(j.contains("dream_fidelity"), kind == agents::AgentKind::ModelBased);
    // Round trip through text keeps the document intact.
    EXPECT_EQ(nlohmann::ordered_json::parse(j.dump(2)), j);
    EXPECT_EQ(report_to_json(build_report(art, cfg, 5)).dump(), j.dump());

    const auto dir = std::filesystem::temp_directory_path() / ("forage_report_" + agents::to_string(kind));
    std::filesystem::remove_all(dir);
    export_report(report, dir.string());
    EXPECT_TRUE(std::filesystem::exists(dir / "report.json"));
    const std::string pgm = io::read_text_file((dir / "occupancy_x5.pgm").string());
    EXPECT_EQ(pgm.substr(0, 11), "P2\n13 5\n255");
    EXPECT_TRUE(std::filesystem::exists(dir / "occupancy_x3.csv"));
    std::filesystem::remove_all(dir);
  }
  const auto art = tiny_artifact(agents::AgentKind::ModelFree);
  ExperimentConfig far = cfg;
  far.distances = {9};
  EXPECT_THROW(build_report(art, far, 5), CompatibilityError);
}

TEST(Report, UnwritableDestinationIsIoError) {
  EXPECT_THROW(export_report(Report{}, "/proc/forage_cannot_write_here"), IoError);
}
