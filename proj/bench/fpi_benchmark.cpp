// Sequential recurrence vs. one fixed-point sweep (serial reference and
// OpenMP) vs. a full rho-iteration solve.

#include <benchmark/benchmark.h>

#include <random>

#include "fixpoint/fpi.hpp"
#include "fixpoint/trainer.hpp"

using namespace fixpoint;

namespace {

constexpr std::size_t kHidden = 100;
constexpr std::size_t kVocab = 1000;

struct Fixture {
  ModelParams params;
  std::vector<TokenId> inputs;
  Vector h0;

  explicit Fixture(std::size_t T) : h0(kHidden, 0.0) {
    TrainConfig c;
    c.hidden = kHidden;
    params = init_params(c, kVocab);
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<TokenId> tok(0, kVocab - 1);
    inputs.resize(T);
    for (auto& x : inputs) x = tok(rng);
  }
};

void BM_Sequential(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(sequential_forward(f.inputs, f.h0, f.params));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_SweepSerial(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  HistoryBlock old = fpi_solve(f.inputs, f.h0, 3, f.params).block, next;
  for (auto _ : state) benchmark::DoNotOptimize(fpi_update_serial(old, f.inputs, f.params, next));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_SweepParallel(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  const int workers = static_cast<int>(state.range(1));
  HistoryBlock old = fpi_solve(f.inputs, f.h0, 3, f.params).block, next;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fpi_update_into(old, f.inputs, f.params, next, nullptr, workers));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Solve(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  const auto rho = static_cast<std::size_t>(state.range(1));
  const int workers = static_cast<int>(state.range(2));
  for (auto _ : state) {
    benchmark::DoNotOptimize(fpi_solve(f.inputs, f.h0, rho, f.params, FpiInit::zeros, workers));
  }
}

}  // namespace

BENCHMARK(BM_Sequential)->Arg(256)->Arg(1024);
BENCHMARK(BM_SweepSerial)->Arg(256)->Arg(1024);
BENCHMARK(BM_SweepParallel)->ArgsProduct({{256, 1024}, {1, 2, 4}});
BENCHMARK(BM_Solve)->ArgsProduct({{256}, {1, 4, 16}, {1, 4}});

BENCHMARK_MAIN();
