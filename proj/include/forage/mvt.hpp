#pragma once

// Analytical patch-leaving model: gain functions, net intake rates and the
// optimal residence time for an exponentially depleting patch.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace forage::mvt {

/// Parameters of the in-patch reward r(n) = peak * exp(-decay * n).
struct RewardParams {
  double peak = 30.0;    ///< N, energy per step on entry
  double decay = 0.01;   ///< lambda, per step

  /// Throws ParameterError unless peak > 0 and decay > 0.
  void validate() const;
};

struct PatchType {
  double proportion = 1.0;        ///< P_i
  double search_cost_rate = 0.0;  ///< E_si, energy per in-patch step
  std::vector<double> gain_table; ///< h_i(T) tabulated at T = 0, 1, 2, ...
};

struct Habitat {
  std::vector<PatchType> patch_types;
  double travel_cost_rate = 0.0;  ///< E_T
  double travel_time = 1.0;       ///< t, in steps

  void validate() const;
};

/// Per-patch-type residence T_i, in steps.
struct ResidenceTimes {
  std::vector<std::size_t> steps;
};

struct MvtSolution {
  std::size_t optimal_steps = 1;  ///< n*
  double optimal_rate = 0.0;      ///< E_n(n*)
  /// rate_curve[k] holds E_n(k + 1) for k in [0, scan_bound).
  std::vector<double> rate_curve;

  double rate_at(std::size_t n) const { return rate_curve.at(n - 1); }
};

inline constexpr std::size_t kDefaultScanBound = 1500;

double reward_at(const RewardParams& params, std::size_t n);

/// Sum of reward_at(i) for i = 1..n. Zero for n = 0.
double cumulative_gain(const RewardParams& params, std::size_t n);

/// cumulative_gain(n) tabulated for n = 0..n_max.
std::vector<double> gain_table(const RewardParams& params, std::size_t n_max);

/// Adapted single-patch intake rate: cumulative_gain(n) / (distance + n).
double net_intake_rate(const RewardParams& params, double distance, std::size_t n);

/// Exhaustive argmax of net_intake_rate over n in [1, scan_bound]. Ties go to
/// the smaller n.
MvtSolution optimal_residence(const RewardParams& params, double distance,
                              std::size_t scan_bound = kDefaultScanBound);

/// General multi-patch intake rate
///   (sum P_i g_i(T_i) - t E_T) / (t + sum P_i T_i),  g_i(T) = h_i(T) - E_si T.
double general_net_rate(const Habitat& habitat, const ResidenceTimes& residence);

struct GainReport {
  bool zero_at_origin = false;
  bool increasing_at_origin = false;
  /// Smallest t such that every second forward difference from t onward is
  /// strictly negative; empty when no such threshold exists.
  std::optional<std::size_t> concavity_threshold;

  bool admissible() const {
    return zero_at_origin && increasing_at_origin && concavity_threshold.has_value();
  }
};

/// Checks g(0) = 0, g(1) - g(0) > 0 and eventual strict concavity on a gain
/// tabulated at integer steps. Needs at least four points.
GainReport verify_gain_properties(std::span<const double> gain);

/// True when the discrete marginal gain crosses the average rate at n:
///   r(n) >= E_n(n)  and  r(n + 1) <= E_n(n).
bool marginal_condition_check(const RewardParams& params, double distance, std::size_t n);

}  // namespace forage::mvt
