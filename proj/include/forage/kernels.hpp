#pragma once

// Data-parallel inner loops. Each OpenMP kernel has a serial twin that
// computes bit-identical results; tests pin the two together and the
// benchmark target compares their throughput.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace forage::kernels {

/// How a backup combines several recorded successors of one pair.
/// Pessimistic takes the lowest successor value: in a deterministic world,
/// more than one successor means the state is aliased.
enum class Backup : std::uint8_t { Expected, Pessimistic };

/// Learned model in CSR form. Pair p = state * kActionsPerState + action
/// owns successors [pair_begin[p], pair_begin[p + 1]).
struct DenseModel {
  static constexpr std::size_t kActionsPerState = 5;

  std::size_t num_states = 0;
  std::vector<std::uint32_t> pair_begin;
  std::vector<std::uint32_t> next;
  std::vector<double> prob;
  std::vector<double> reward;
  std::vector<std::uint8_t> known;
  Backup backup = Backup::Expected;
  /// When set, every unknown pair is worth this much instead of being skipped.
  std::optional<double> optimistic_value;
};

/// One Jacobi Bellman backup:
///   q[s,a] = reward[s,a] + gamma * sum_s' prob * v_in[s']   (known pairs)
///   (min_s' v_in[s'] instead of the sum under Backup::Pessimistic)
///   v_out[s] = max over known a of q[s,a], or 0 when no pair is known.
///   With optimistic_value set, unknown pairs take q = *optimistic_value.
/// Returns max_s |v_out[s] - v_in[s]|.
double bellman_sweep_serial(const DenseModel& model, double gamma, std::span<const double> v_in,
                            std::span<double> v_out, std::span<double> q_out);
double bellman_sweep_parallel(const DenseModel& model, double gamma, std::span<const double> v_in,
                              std::span<double> v_out, std::span<double> q_out);

/// Histogram of cell indices: counts[cells[i]] += 1.
void count_cells_serial(std::span<const std::uint32_t> cells, std::span<std::uint64_t> counts);
void count_cells_parallel(std::span<const std::uint32_t> cells, std::span<std::uint64_t> counts);

/// Number of OpenMP threads available (1 when built without OpenMP).
int max_threads();

}  // namespace forage::kernels
