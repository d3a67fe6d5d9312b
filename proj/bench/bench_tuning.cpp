// Serial reference vs OpenMP sweep for the two hot loops: GO library
// tuning and the per-shape experiment runs.

#include <benchmark/benchmark.h>

#include "cogemm/harness.hpp"
#include "cogemm/tuner.hpp"

namespace {

using namespace cogemm;

std::vector<CorpusItem> bench_corpus(std::size_t count) {
  CorpusSpec spec;
  spec.seed = 11;
  spec.precisions = {Precision::Fp16, Precision::Fp32};
  spec.filler_count = count;
  return generate_corpus(spec).items;
}

void BM_BuildLibrary(benchmark::State& state) {
  const Exec exec = state.range(0) ? Exec::Parallel : Exec::Serial;
  const GpuResources gpu = default_gpu();
  const auto kernels = enumerate_kernels(SpaceBounds{}, gpu);
  const auto corpus = bench_corpus(64);
  for (auto _ : state) {
    GoLibrary lib = build_go_library(corpus, gpu, kernels, ModelCard{}, exec);
    benchmark::DoNotOptimize(lib);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(corpus.size()));
}
BENCHMARK(BM_BuildLibrary)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_RunOracle(benchmark::State& state) {
  const Exec exec = state.range(0) ? Exec::Parallel : Exec::Serial;
  const GpuResources gpu = default_gpu();
  const auto kernels = enumerate_kernels(SpaceBounds{}, gpu);
  const auto corpus = bench_corpus(64);
  const GoLibrary lib = build_go_library(corpus, gpu, kernels, ModelCard{}, Exec::Parallel);
  RunOptions opts;
  opts.exec = exec;
  for (auto _ : state) {
    RunReport r = run_experiment(ExperimentConfig{ConfigName::Oracle, 16, 7}, corpus, lib, nullptr, opts);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_RunOracle)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
