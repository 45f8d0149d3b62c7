#pragma once

// Subcommands behind the forage command-line tool.

#include <cstdint>
#include <exception>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "forage/config.hpp"

namespace forage::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitInternal = 3;

/// Maps a caught exception onto a process exit code.
int exit_code_for(const std::exception& e);

struct GlobalOptions {
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

/// Loads the config file (or defaults), applies flag overrides and
/// validates the result.
config::RunConfig resolve_config(const GlobalOptions& options);

/// Prints n*, E_n(n*) and the marginal-condition verdict per distance and
/// writes mvt.json. With `json_stdout` the JSON goes to `out` instead of
/// the table.
void cmd_mvt(const config::RunConfig& cfg, bool json_stdout, std::ostream& out);

/// Trains the configured agent; writes policy_<kind>.json and
/// learning_curve_<kind>.csv. Returns the artifact path.
std::string cmd_train(const config::RunConfig& cfg, std::ostream& out);

/// Probes a trained artifact on every configured distance and writes the
/// report, occupancy maps and feature dumps.
void cmd_probe(const config::RunConfig& cfg, const std::string& policy_path, std::ostream& out);

struct PlayOptions {
  std::optional<int> distance;
  std::optional<std::string> map_path;
  std::optional<std::string> script;  ///< whitespace or comma separated actions
};

/// Replays actions through the environment, printing the grid after the
/// reset and after every step; writes trajectory.csv. Without a script the
/// actions are read from `in` until end of input.
void cmd_play(const config::RunConfig& cfg, const PlayOptions& options, std::istream& in,
              std::ostream& out);

/// Splits an action script into actions. Throws ParseError on unknown tokens.
std::vector<env::Action> parse_script(std::string_view script);

/// Full command-line entry point; returns the exit code.
int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out,
            std::ostream& err);

}  // namespace forage::cli
