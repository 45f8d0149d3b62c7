// Serial vs OpenMP kernels on synthetic models.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "forage/kernels.hpp"

using namespace forage::kernels;

namespace {

constexpr std::size_t kA = DenseModel::kActionsPerState;

DenseModel make_model(std::size_t states) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(states - 1));
  DenseModel m;
  m.num_states = states;
  m.backup = Backup::Pessimistic;
  m.pair_begin.push_back(0);
  for (std::size_t p = 0; p < states * kA; ++p) {
    m.known.push_back(1);
    m.reward.push_back(30.0 * u(rng));
    for (int i = 0; i < 2; ++i) {
      m.next.push_back(pick(rng));
      m.prob.push_back(0.5);
    }
    m.pair_begin.push_back(static_cast<std::uint32_t>(m.next.size()));
  }
  return m;
}

template <double (*Sweep)(const DenseModel&, double, std::span<const double>, std::span<double>,
                          std::span<double>)>
void BM_Sweep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const DenseModel m = make_model(n);
  std::vector<double> v(n, 0.0), out(n), q(n * kA);
  for (auto _ : state) {
    benchmark::DoNotOptimize(Sweep(m, 0.995, v, out, q));
    v.swap(out);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n));
}

template <void (*Count)(std::span<const std::uint32_t>, std::span<std::uint64_t>)>
void BM_Count(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::uint32_t> pick(0, 64);
  std::vector<std::uint32_t> cells(static_cast<std::size_t>(state.range(0)));
  for (auto& c : cells) c = pick(rng);
  std::vector<std::uint64_t> counts(65);
  for (auto _ : state) {
    std::fill(counts.begin(), counts.end(), 0);
    Count(cells, counts);
    benchmark::DoNotOptimize(counts.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_Sweep<bellman_sweep_serial>)->Arg(1 << 12)->Arg(1 << 16)->Arg(1 << 19);
BENCHMARK(BM_Sweep<bellman_sweep_parallel>)->Arg(1 << 12)->Arg(1 << 16)->Arg(1 << 19);
BENCHMARK(BM_Count<count_cells_serial>)->Arg(1 << 16)->Arg(1 << 22);
BENCHMARK(BM_Count<count_cells_parallel>)->Arg(1 << 16)->Arg(1 << 22);

BENCHMARK_MAIN();
