// Serial reference kernels against their OpenMP counterparts, plus the
// per-event cost of each update algorithm.

#include <benchmark/benchmark.h>

#include "sns/cpd_state.hpp"
#include "sns/kernels.hpp"
#include "sns/stream_io.hpp"
#include "sns/updates.hpp"

namespace {

struct Fixture {
  sns::StreamWindow stream{{300, 300}, 10, 10};
  sns::CpdState state;

  explicit Fixture(std::size_t tuples) {
    sns::SynthParams p;
    p.mode_lengths = {300, 300};
    p.num_tuples = tuples;
    p.mean_gap = 0.05;
    p.power_law = true;
    for (const auto& t : sns::synth_stream(p, 1)) stream.ingest(t);
    state = sns::init_factors(stream.window().dims(), 20, 3);
  }
};

Fixture& fixture() {
  static Fixture f(60000);
  return f;
}

void BM_MttkrpSerial(benchmark::State& st) {
  auto& f = fixture();
  const auto mode = static_cast<std::size_t>(st.range(0));
  for (auto _ : st) {
    benchmark::DoNotOptimize(sns::kernels::mttkrp(f.stream.window(), nullptr, f.state.factors, mode));
  }
  st.counters["nnz"] = static_cast<double>(f.stream.window().nnz());
}
BENCHMARK(BM_MttkrpSerial)->Arg(0)->Arg(2);

void BM_MttkrpOmp(benchmark::State& st) {
  auto& f = fixture();
  const auto mode = static_cast<std::size_t>(st.range(0));
  for (auto _ : st) {
    benchmark::DoNotOptimize(sns::kernels::mttkrp_omp(f.stream.window(), f.state.factors, mode));
  }
  st.counters["nnz"] = static_cast<double>(f.stream.window().nnz());
}
BENCHMARK(BM_MttkrpOmp)->Arg(0)->Arg(2);

void BM_Fitness(benchmark::State& st) {
  auto& f = fixture();
  for (auto _ : st) benchmark::DoNotOptimize(sns::fitness(f.stream.window(), f.state));
}
BENCHMARK(BM_Fitness);

void BM_AlsSweep(benchmark::State& st) {
  auto& f = fixture();
  sns::CpdState s = f.state;
  for (auto _ : st) benchmark::DoNotOptimize(sns::als_sweep(f.stream.window(), s));
}
BENCHMARK(BM_AlsSweep)->Unit(benchmark::kMillisecond);

void BM_UpdateEvent(benchmark::State& st) {
  auto& f = fixture();
  const auto algorithm = static_cast<sns::Algorithm>(st.range(0));
  sns::StreamWindow stream = f.stream;
  sns::CpdState state = f.state;
  sns::balance_columns(state);
  if (algorithm == sns::Algorithm::kMat) sns::normalize_into_weights(state);
  sns::Updater updater({algorithm, 20, 1000.0, 5});
  sns::SynthParams p;
  p.mode_lengths = {300, 300};
  p.num_tuples = 2000000;
  p.mean_gap = 0.05;
  p.power_law = true;
  p.start_time = stream.clock();
  sns::SynthStream source(p, 9);
  auto sink = [&](const sns::DeltaChange& d) { updater.dispatch_event(d, stream.window(), state); };
  for (auto _ : st) {
    auto t = source.next();
    if (!t) break;
    sink(stream.ingest(*t, sink));
  }
  st.counters["events"] = benchmark::Counter(static_cast<double>(updater.stats().events));
}
BENCHMARK(BM_UpdateEvent)
    ->Arg(static_cast<int>(sns::Algorithm::kVec))
    ->Arg(static_cast<int>(sns::Algorithm::kRnd))
    ->Arg(static_cast<int>(sns::Algorithm::kVecPlus))
    ->Arg(static_cast<int>(sns::Algorithm::kRndPlus))
    ->Iterations(20000);
BENCHMARK(BM_UpdateEvent)->Arg(static_cast<int>(sns::Algorithm::kMat))->Iterations(20);

}  // namespace

BENCHMARK_MAIN();
