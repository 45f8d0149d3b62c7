#include "forage/mvt.hpp"

#include <cmath>
#include <string>

#include "forage/error.hpp"

namespace forage::mvt {

void RewardParams::validate() const {
  if (!(peak > 0.0) || !std::isfinite(peak)) {
    throw ParameterError("reward peak N must be positive, got " + std::to_string(peak));
  }
  if (!(decay > 0.0) || !std::isfinite(decay)) {
    throw ParameterError("reward decay lambda must be positive, got " + std::to_string(decay));
  }
}

void Habitat::validate() const {
  if (patch_types.empty()) throw ParameterError("habitat has no patch types");
  double total = 0.0;
  for (const auto& p : patch_types) {
    if (p.proportion < 0.0 || p.proportion > 1.0) {
      throw ParameterError("patch proportion outside [0, 1]");
    }
    if (p.search_cost_rate < 0.0) throw ParameterError("negative search cost rate");
    if (p.gain_table.empty() || p.gain_table.front() != 0.0) {
      throw ParameterError("gain table must start at h(0) = 0");
    }
    for (std::size_t i = 1; i < p.gain_table.size(); ++i) {
      if (p.gain_table[i] < p.gain_table[i - 1]) {
        throw ParameterError("gain table must be nondecreasing");
      }
    }
    total += p.proportion;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ParameterError("patch proportions must sum to 1");
  if (travel_cost_rate < 0.0) throw ParameterError("negative travel cost rate");
  if (!(travel_time > 0.0)) throw ParameterError("travel time must be positive");
}

double reward_at(const RewardParams& params, std::size_t n) {
  params.validate();
  return params.peak * std::exp(-params.decay * static_cast<double>(n));
}

double cumulative_gain(const RewardParams& params, std::size_t n) {
  params.validate();
  double sum = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    sum += params.peak * std::exp(-params.decay * static_cast<double>(i));
  }
  return sum;
}

std::vector<double> gain_table(const RewardParams& params, std::size_t n_max) {
  params.validate();
  std::vector<double> table(n_max + 1, 0.0);
  double sum = 0.0;
  for (std::size_t i = 1; i <= n_max; ++i) {
    sum += params.peak * std::exp(-params.decay * static_cast<double>(i));
    table[i] = sum;
  }
  return table;
}

double net_intake_rate(const RewardParams& params, double distance, std::size_t n) {
  if (!(distance > 0.0)) {
    throw ParameterError("inter-patch distance must be positive");
  }
  return cumulative_gain(params, n) / (distance + static_cast<double>(n));
}

MvtSolution optimal_residence(const RewardParams& params, double distance,
                              std::size_t scan_bound) {
  params.validate();
  if (scan_bound < 1) throw ParameterError("scan bound must be at least 1");
  if (!(distance > 0.0)) throw ParameterError("inter-patch distance must be positive");

  MvtSolution sol;
  sol.rate_curve.resize(scan_bound);
  // Same summation order as cumulative_gain, so rates match it bit for bit.
  double gain = 0.0;
  for (std::size_t n = 1; n <= scan_bound; ++n) {
    gain += params.peak * std::exp(-params.decay * static_cast<double>(n));
    const double rate = gain / (distance + static_cast<double>(n));
    sol.rate_curve[n - 1] = rate;
    if (n == 1 || rate > sol.optimal_rate) {
      sol.optimal_rate = rate;
      sol.optimal_steps = n;
    }
  }
  return sol;
}

double general_net_rate(const Habitat& habitat, const ResidenceTimes& residence) {
  if (residence.steps.size() != habitat.patch_types.size()) {
    throw ShapeError("residence times have " + std::to_string(residence.steps.size()) +
                     " entries, habitat has " +
                     std::to_string(habitat.patch_types.size()) + " patch types");
  }
  habitat.validate();
  double gained = 0.0;
  double resident = 0.0;
  for (std::size_t i = 0; i < residence.steps.size(); ++i) {
    const auto& patch = habitat.patch_types[i];
    const std::size_t t_i = residence.steps[i];
    if (t_i >= patch.gain_table.size()) {
      throw ShapeError("residence time beyond the tabulated gain function");
    }
    const double net = patch.gain_table[t_i] -
                       patch.search_cost_rate * static_cast<double>(t_i);
    gained += patch.proportion * net;
    resident += patch.proportion * static_cast<double>(t_i);
  }
  return (gained - habitat.travel_time * habitat.travel_cost_rate) /
         (habitat.travel_time + resident);
}

GainReport verify_gain_properties(std::span<const double> gain) {
  if (gain.size() < 4) {
    throw InsufficientDataError("gain properties need at least 4 tabulated points");
  }
  GainReport report;
  report.zero_at_origin = gain[0] == 0.0;
  report.increasing_at_origin = gain[1] - gain[0] > 0.0;

  // Second differences d2[k] = g(k+2) - 2 g(k+1) + g(k), k = 0..size-3.
  const std::size_t count = gain.size() - 2;
  std::size_t threshold = count;
  for (std::size_t k = count; k-- > 0;) {
    const double d2 = (gain[k + 2] - gain[k + 1]) - (gain[k + 1] - gain[k]);
    if (!(d2 < 0.0)) break;
    threshold = k;
  }
  if (threshold < count) report.concavity_threshold = threshold;
  return report;
}

bool marginal_condition_check(const RewardParams& params, double distance, std::size_t n) {
  if (n < 1) throw ParameterError("marginal condition needs n >= 1");
  const double average = net_intake_rate(params, distance, n);
  return reward_at(params, n) >= average && reward_at(params, n + 1) <= average;
}

}  // namespace forage::mvt
