#include <benchmark/benchmark.h>

#include "anchorprop/parallel.hpp"
#include "anchorprop/propagation.hpp"
#include "anchorprop/synthdata.hpp"

namespace {

using namespace anchorprop;

struct Workload {
  SyntheticClip clip;
  ToyEditNetwork network;
};

// Reduced size so a full sweep finishes in seconds; the CLI bench and the
// acceptance binary time the full 32x32 / dim 64 / 10 step workload.
const Workload& workload() {
  static const Workload w = [] {
    ClipSpec spec;
    spec.seed = 11;
    spec.n_frames = 24;
    spec.grid_h = spec.grid_w = 16;
    spec.dim = 64;
    spec.image_size = 128;
    spec.motion = MotionType::kSubTokenShift;
    spec.shift_x = 0.25;
    spec.distinct_tokens = false;
    NetworkConfig net;
    net.grid_h = net.grid_w = 16;
    net.steps = 4;
    return Workload{generate_clip(spec), ToyEditNetwork(net)};
  }();
  return w;
}

void BM_SerialAnchored(benchmark::State& state) {
  const auto& w = workload();
  for (auto _ : state) {
    auto v = edit_video(w.clip.frames(), w.network, EditMode::kAnchored, 3);
    benchmark::DoNotOptimize(v.frames.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.clip.size()));
}

void BM_ParallelAnchored(benchmark::State& state) {
  const auto& w = workload();
  const auto workers = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto v = run_parallel(w.clip.frames(), w.network, 3, workers);
    benchmark::DoNotOptimize(v.frames.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.clip.size()));
}

void BM_SerialIndependent(benchmark::State& state) {
  const auto& w = workload();
  for (auto _ : state) {
    auto v = edit_video(w.clip.frames(), w.network, EditMode::kIndependent);
    benchmark::DoNotOptimize(v.frames.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.clip.size()));
}

void BM_ParallelIndependent(benchmark::State& state) {
  const auto& w = workload();
  const auto workers = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto v = run_parallel_independent(w.clip.frames(), w.network, workers);
    benchmark::DoNotOptimize(v.frames.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.clip.size()));
}

}  // namespace

BENCHMARK(BM_SerialAnchored)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ParallelAnchored)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_SerialIndependent)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ParallelIndependent)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
