#include "forage/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace forage::kernels {

namespace {

constexpr std::size_t kA = DenseModel::kActionsPerState;

inline double backup_state(const DenseModel& m, double gamma, std::span<const double> v_in,
                           std::span<double> q_out, std::size_t s) {
  double best = 0.0;
  bool any = false;
  for (std::size_t a = 0; a < kA; ++a) {
    const std::size_t p = s * kA + a;
    if (!m.known[p]) {
      if (!m.optimistic_value) continue;
      q_out[p] = *m.optimistic_value;
      if (!any || q_out[p] > best) best = q_out[p];
      any = true;
      continue;
    }
    double expected = 0.0;
    if (m.backup == Backup::Pessimistic) {
      expected = v_in[m.next[m.pair_begin[p]]];
      for (std::uint32_t k = m.pair_begin[p] + 1; k < m.pair_begin[p + 1]; ++k) {
        expected = std::min(expected, v_in[m.next[k]]);
      }
    } else {
      for (std::uint32_t k = m.pair_begin[p]; k < m.pair_begin[p + 1]; ++k) {
        expected += m.prob[k] * v_in[m.next[k]];
      }
    }
    const double q = m.reward[p] + gamma * expected;
    q_out[p] = q;
    if (!any || q > best) {
      best = q;
      any = true;
    }
  }
  return any ? best : 0.0;
}

}  // namespace

double bellman_sweep_serial(const DenseModel& model, double gamma, std::span<const double> v_in,
                            std::span<double> v_out, std::span<double> q_out) {
  double residual = 0.0;
  for (std::size_t s = 0; s < model.num_states; ++s) {
    v_out[s] = backup_state(model, gamma, v_in, q_out, s);
    residual = std::max(residual, std::abs(v_out[s] - v_in[s]));
  }
  return residual;
}

double bellman_sweep_parallel(const DenseModel& model, double gamma, std::span<const double> v_in,
                              std::span<double> v_out, std::span<double> q_out) {
  double residual = 0.0;
  const auto n = static_cast<std::int64_t>(model.num_states);
#pragma omp parallel for schedule(static) reduction(max : residual)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(i);
    v_out[s] = backup_state(model, gamma, v_in, q_out, s);
    residual = std::max(residual, std::abs(v_out[s] - v_in[s]));
  }
  return residual;
}

void count_cells_serial(std::span<const std::uint32_t> cells, std::span<std::uint64_t> counts) {
  for (const auto c : cells) ++counts[c];
}

void count_cells_parallel(std::span<const std::uint32_t> cells, std::span<std::uint64_t> counts) {
  const auto n = static_cast<std::int64_t>(cells.size());
#pragma omp parallel
  {
    std::vector<std::uint64_t> local(counts.size(), 0);
#pragma omp for schedule(static) nowait
    for (std::int64_t i = 0; i < n; ++i) ++local[cells[static_cast<std::size_t>(i)]];
#pragma omp critical
    for (std::size_t c = 0; c < counts.size(); ++c) counts[c] += local[c];
  }
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace forage::kernels
