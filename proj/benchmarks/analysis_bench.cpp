#include <benchmark/benchmark.h>

#include "vrulab/dataset.hpp"
#include "vrulab/patch.hpp"
#include "vrulab/probe.hpp"

using namespace vrulab;

namespace {

const model::Vocab& vocab() {
  static const auto v = model::Vocab::for_pool(env::ObjectPool::default_pool());
  return v;
}

model::Params params() {
  model::ModelConfig c;
  c.vocab_size = vocab().size();
  return model::Params::initialize(c);
}

std::vector<env::Episode> episodes(int n) {
  env::DatasetConfig dc;
  dc.seed = 9;
  dc.quotas = {{2, n}, {3, n}};
  return env::generate_dataset(dc, env::ObjectPool::default_pool()).episodes;
}

void BM_CaptureRepresentations(benchmark::State& state) {
  const auto p = params();
  const auto eps = episodes(50);
  for (auto _ : state) benchmark::DoNotOptimize(probe::capture_representations(p, vocab(), eps).layers.size());
}
BENCHMARK(BM_CaptureRepresentations)->Unit(benchmark::kMillisecond);

// One probe fit on a layer of 250 episodes (625 rows, d = 128).
void BM_TrainProbe(benchmark::State& state) {
  const auto eps = episodes(125);
  const auto reps = probe::capture_representations(params(), vocab(), eps);
  auto ds = probe::build_probe_dataset(reps, eps, probe::Target::Orientation, 3);
  probe::assign_split(ds, 0);
  for (auto _ : state) benchmark::DoNotOptimize(probe::train_probe(ds, {}, 0).bias);
}
BENCHMARK(BM_TrainProbe)->Unit(benchmark::kMillisecond);

// Every head of a 6x8 model on one pair.
void BM_CausalEffectsPerPair(benchmark::State& state) {
  const auto p = params();
  auto pairs = patch::build_pairs(vocab(), episodes(20));
  pairs.resize(1);
  const auto mode = state.range(0) == 0 ? patch::PatchMode::DirectPath : patch::PatchMode::Propagate;
  for (auto _ : state) benchmark::DoNotOptimize(patch::causal_effects(p, pairs, mode).phi_mean);
}
BENCHMARK(BM_CausalEffectsPerPair)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
