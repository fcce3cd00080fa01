// Serial reference vs OpenMP kernels. Run with OMP_NUM_THREADS set to compare.

#include <benchmark/benchmark.h>

#include <random>

#include "hyperseg/distance_transform.hpp"
#include "hyperseg/gyroplane.hpp"
#include "hyperseg/synth.hpp"

namespace {

using namespace hyperseg;

struct Problem {
  Field<double> grid;
  GyroplaneBank bank;
};

Problem make_problem(std::size_t side, std::size_t classes, std::size_t dims) {
  const Curvature c(1.0);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Problem p{Field<double>(side, side, dims), GyroplaneBank(classes, dims, c)};
  for (std::size_t i = 0; i < p.grid.pixels(); ++i) {
    auto z = p.grid.pixel(i);
    for (double& v : z) v = u(rng);
    const double r = norm(z);
    for (double& v : z) v *= 0.8 * std::abs(u(rng)) / r;
  }
  for (std::size_t y = 0; y < classes; ++y) {
    for (double& v : p.bank.offset(y)) v = 0.3 * u(rng) / std::sqrt(static_cast<double>(dims));
    for (double& v : p.bank.orientation(y)) v = u(rng);
  }
  return p;
}

void BM_LogitsTractableParallel(benchmark::State& state) {
  const Problem p = make_problem(static_cast<std::size_t>(state.range(0)), 20, 16);
  for (auto _ : state) benchmark::DoNotOptimize(logits_tractable(p.grid, p.bank));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

void BM_LogitsTractableSerial(benchmark::State& state) {
  const Problem p = make_problem(static_cast<std::size_t>(state.range(0)), 20, 16);
  for (auto _ : state) benchmark::DoNotOptimize(logits_tractable_serial(p.grid, p.bank));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

void BM_LogitsNaive(benchmark::State& state) {
  const Problem p = make_problem(static_cast<std::size_t>(state.range(0)), 20, 16);
  for (auto _ : state) benchmark::DoNotOptimize(logits_naive(p.grid, p.bank));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

Map2D<std::uint8_t> random_seeds(std::size_t side) {
  std::mt19937_64 rng(11);
  std::bernoulli_distribution on(0.01);
  Map2D<std::uint8_t> seeds(side, side, 0);
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = on(rng);
  return seeds;
}

void BM_EdtParallel(benchmark::State& state) {
  const auto seeds = random_seeds(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(squared_edt(seeds));
}

void BM_EdtSerial(benchmark::State& state) {
  const auto seeds = random_seeds(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(squared_edt_serial(seeds));
}

}  // namespace

BENCHMARK(BM_LogitsTractableParallel)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LogitsTractableSerial)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LogitsNaive)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EdtParallel)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EdtSerial)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
