// Parallel kernels against their serial reference on a denoising-sized problem.
#include "ddpt/initkit.hpp"
#include "ddpt/kernels.hpp"
#include "ddpt/model.hpp"
#include "ddpt/rng.hpp"

#include <benchmark/benchmark.h>

using namespace ddpt;

namespace {

struct Problem {
  Mat x;
  Hyperparameters hyper;
  VariationalState state;
  ModelMoments mom;
  ProjectionPosterior proj;
};

const Problem& problem() {
  static const Problem p = [] {
    Problem out;
    const int d = 64;
    const Eigen::Index n = 4000;
    CounterRng rng(77, 3);
    out.x.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) out.x(i, j) = rng.uniform();
    out.hyper = default_hyperparameters(d);
    out.hyper.T_max = 12;
    out.hyper.K_max = 4;
    out.state = init_state(out.x, out.hyper, 0);
    // Spread responsibilities so several groups pass the threshold.
    for (Eigen::Index i = 0; i < n; ++i) {
      out.state.resp_group.row(i).array() += 0.1;
      out.state.resp_group.row(i) /= out.state.resp_group.row(i).sum();
    }
    out.mom = compute_moments(out.state);
    out.proj = compute_projections(out.x, out.state, out.mom, 1e-6);
    return out;
  }();
  return p;
}

void set_threads(benchmark::State& st) { set_thread_count(static_cast<int>(st.range(0))); }

void BM_projections(benchmark::State& st) {
  const auto& p = problem();
  set_threads(st);
  for (auto _ : st) benchmark::DoNotOptimize(compute_projections(p.x, p.state, p.mom, 1e-6));
}

void BM_projections_serial(benchmark::State& st) {
  const auto& p = problem();
  for (auto _ : st) benchmark::DoNotOptimize(reference::compute_projections(p.x, p.state, p.mom, 1e-6));
}

void BM_loglik(benchmark::State& st) {
  const auto& p = problem();
  set_threads(st);
  for (auto _ : st) benchmark::DoNotOptimize(loglik_table(p.x, p.mom, p.proj));
}

void BM_loglik_serial(benchmark::State& st) {
  const auto& p = problem();
  for (auto _ : st) benchmark::DoNotOptimize(reference::loglik_table(p.x, p.mom, p.proj));
}

void BM_accumulate(benchmark::State& st) {
  const auto& p = problem();
  set_threads(st);
  for (auto _ : st) benchmark::DoNotOptimize(accumulate_statistics(p.x, p.state, p.proj));
}

void BM_accumulate_serial(benchmark::State& st) {
  const auto& p = problem();
  for (auto _ : st) benchmark::DoNotOptimize(reference::accumulate_statistics(p.x, p.state, p.proj));
}

}  // namespace

BENCHMARK(BM_projections)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_projections_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_loglik)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_loglik_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_accumulate)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_accumulate_serial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
