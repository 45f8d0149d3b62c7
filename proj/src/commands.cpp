#include "forage/commands.hpp"

#include <cctype>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "forage/error.hpp"
#include "forage/eval.hpp"
#include "forage/io.hpp"

namespace forage::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return kExitIo;
  if (dynamic_cast<const ParameterError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const GeometryError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
      dynamic_cast<const CompatibilityError*>(&e)) {
    return kExitUsage;
  }
  return kExitInternal;
}

config::RunConfig resolve_config(const GlobalOptions& options) {
  config::RunConfig cfg = options.config_path ? config::load(*options.config_path)
                                              : config::RunConfig{};
  if (options.seed) cfg.master_seed = *options.seed;
  if (options.out_dir) cfg.output_dir = *options.out_dir;
  cfg.validate();
  return cfg;
}

namespace {

std::string out_path(const config::RunConfig& cfg, const std::string& name) {
  return (fs::path(cfg.output_dir) / name).string();
}

}  // namespace

void cmd_mvt(const config::RunConfig& cfg, bool json_stdout, std::ostream& out) {
  ordered_json doc;
  doc["reward"] = {{"N", cfg.reward.peak}, {"lambda", cfg.reward.decay}};
  doc["scenarios"] = ordered_json::array();
  std::ostringstream table;
  table << std::setw(6) << "x_bar" << std::setw(8) << "n_star" << std::setw(14) << "rate"
        << "  marginal\n";
  for (const int d : cfg.distances) {
    const auto sol = mvt::optimal_residence(cfg.reward, d);
    const bool marginal = mvt::marginal_condition_check(cfg.reward, d, sol.optimal_steps);
    doc["scenarios"].push_back({{"x_bar", d},
                                {"n_star", sol.optimal_steps},
                                {"rate", sol.optimal_rate},
                                {"marginal_condition", marginal}});
    table << std::setw(6) << d << std::setw(8) << sol.optimal_steps << std::setw(14)
          << io::format_number(sol.optimal_rate) << "  " << (marginal ? "holds" : "violated")
          << '\n';
  }
  const std::string text = doc.dump(2) + "\n";
  io::write_text_file(out_path(cfg, "mvt.json"), text);
  out << (json_stdout ? text : table.str());
}

std::string cmd_train(const config::RunConfig& cfg, std::ostream& out) {
  const auto maps = cfg.maps();
  agents::TrainOptions options;
  options.view_radius = cfg.view_radius;
  const auto result = agents::train(cfg.kind, maps, cfg.agent, cfg.reward, cfg.master_seed, options);
  const std::string kind = agents::to_string(cfg.kind);
  const std::string policy = out_path(cfg, "policy_" + kind + ".json");
  agents::save_artifact(result.artifact, policy);
  io::write_text_file(out_path(cfg, "learning_curve_" + kind + ".csv"),
                      eval::curve_to_csv(result.curve.returns, cfg.omega,
                                         cfg.literal_smoothing ? eval::EmaForm::Literal
                                                               : eval::EmaForm::Standard));
  const auto& r = result.curve.returns;
  out << "trained " << kind << " for " << r.size() << " episodes; last return "
      << io::format_number(r.back()) << "\nwrote " << policy << '\n';
  return policy;
}

void cmd_probe(const config::RunConfig& cfg, const std::string& policy_path, std::ostream& out) {
  const auto artifact =
      std::make_shared<const agents::PolicyArtifact>(agents::load_artifact(policy_path));
  auto report = eval::build_report(artifact, cfg.experiment(), cfg.dream_horizon);
  report.config_echo = config::to_json(cfg);
  eval::export_report(report, cfg.output_dir);

  for (const auto& sc : report.scenarios) {
    const env::WorldMap* found = nullptr;
    for (const auto& m : artifact->catalog.maps()) {
      if (m.distance() == sc.x_bar) found = &m;
    }
    const env::WorldMap& map = *found;  // build_report already matched every distance
    const auto records = eval::run_probe(artifact, map, 1, cfg.episode_steps,
                                         env::derive_seed(cfg.master_seed, 0));
    io::write_text_file(out_path(cfg, "features_x" + std::to_string(sc.x_bar) + ".csv"),
                        eval::features_to_csv(eval::latent_feature_dump(*artifact, map, records)));
    out << "x_bar " << sc.x_bar << ": n* " << sc.solution.optimal_steps;
    if (sc.residence.count > 0) {
      out << ", residence median " << io::format_number(sc.residence.median) << " [q1 "
          << io::format_number(sc.residence.q1) << ", q3 " << io::format_number(sc.residence.q3)
          << "]";
    } else {
      out << ", no patch visits";
    }
    out << ", score median " << io::format_number(sc.scores.median) << '\n';
  }
  out << "wrote " << out_path(cfg, "report.json") << '\n';
}

std::vector<env::Action> parse_script(std::string_view script) {
  std::vector<env::Action> actions;
  std::string token;
  auto flush = [&] {
    if (!token.empty()) actions.push_back(env::parse_action(token));
    token.clear();
  };
  for (const char c : script) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      token.push_back(c);
    }
  }
  flush();
  return actions;
}

void cmd_play(const config::RunConfig& cfg, const PlayOptions& options, std::istream& in,
              std::ostream& out) {
  const env::WorldMap map =
      options.map_path
          ? env::load_map(*options.map_path)
          : env::build_map(options.distance.value_or(cfg.distances.front()), cfg.patch_side,
                           env::kDefaultCorridorMargin, cfg.episode_steps);
  std::vector<env::Action> actions;
  if (options.script) {
    actions = parse_script(*options.script);
  } else {
    std::ostringstream all;
    all << in.rdbuf();
    actions = parse_script(all.str());
  }
  auto [state, obs] =
      env::reset(std::make_shared<const env::WorldMap>(map), cfg.master_seed, cfg.reward,
                 cfg.view_radius);
  out << "step 0\n" << env::render_text(state);
  std::vector<env::StepLog> logs;
  for (const auto a : actions) {
    if (state.done()) break;
    const auto outcome = env::step(state, a);
    logs.push_back(env::make_log(state, outcome));
    out << "step " << state.step << " " << env::action_name(a) << " reward "
        << io::format_number(outcome.reward) << " cue " << io::format_number(outcome.observation.cue)
        << " score " << io::format_number(state.score) << '\n'
        << env::render_text(state);
  }
  std::ostringstream csv;
  env::write_trajectory_csv(csv, logs);
  io::write_text_file(out_path(cfg, "trajectory.csv"), csv.str());
}

int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Patch-foraging simulator, agents and probe reports"};
  app.require_subcommand(1);
  GlobalOptions global;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  auto* config_opt = app.add_option("--config", config_path, "JSON run configuration");
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the config)");
  auto* out_opt = app.add_option("--out", out_dir, "output directory (overrides the config)");

  auto* mvt = app.add_subcommand("mvt", "optimal residence per configured distance");
  bool json_stdout = false;
  mvt->add_flag("--json", json_stdout, "print JSON instead of a table");

  auto* train = app.add_subcommand("train", "train the configured agent");
  std::string agent_kind;
  train->add_option("--agent", agent_kind, "model_free or model_based (overrides the config)");

  auto* probe = app.add_subcommand("probe", "probe a trained policy and write the report");
  std::string policy_path;
  probe->add_option("--policy", policy_path, "policy artifact from train")->required();

  auto* play = app.add_subcommand("play", "replay an action script through the environment");
  PlayOptions play_opts;
  int distance = 0;
  std::string map_path;
  std::string script;
  auto* distance_opt = play->add_option("--distance", distance, "corridor distance");
  auto* map_opt = play->add_option("--map", map_path, "map description file");
  auto* script_opt = play->add_option("--script", script, "actions, e.g. \"L L S S\"");
  map_opt->excludes(distance_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (config_opt->count()) global.config_path = config_path;
    if (seed_opt->count()) global.seed = seed;
    if (out_opt->count()) global.out_dir = out_dir;
    config::RunConfig cfg = resolve_config(global);
    if (train->parsed() && !agent_kind.empty()) cfg.kind = agents::parse_agent_kind(agent_kind);

    if (mvt->parsed()) {
      cmd_mvt(cfg, json_stdout, out);
    } else if (train->parsed()) {
      cmd_train(cfg, out);
    } else if (probe->parsed()) {
      cmd_probe(cfg, policy_path, out);
    } else if (play->parsed()) {
      if (distance_opt->count()) play_opts.distance = distance;
      if (map_opt->count()) play_opts.map_path = map_path;
      if (script_opt->count()) play_opts.script = script;
      cmd_play(cfg, play_opts, in, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitOk;
}

}  // namespace forage::cli
