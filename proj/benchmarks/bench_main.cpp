#include <vector>

#include <benchmark/benchmark.h>

#include "driftlab/data.hpp"
#include "driftlab/dira.hpp"
#include "driftlab/ewc.hpp"
#include "driftlab/network.hpp"

using namespace driftlab;

namespace {

const GlyphSplits& glyphs() {
  static const GlyphSplits s = generate_glyphs(GlyphSpec{});
  return s;
}

Network default_net() { return Network::classifier(256, std::vector<std::size_t>{256, 128, 64}, 6, 1); }

std::vector<std::size_t> first_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

void BM_Forward(benchmark::State& state) {
  const Network net = default_net();
  const auto idx = first_indices(static_cast<std::size_t>(state.range(0)));
  const Tensor x = glyphs().train.batch(idx);
  for (auto _ : state) benchmark::DoNotOptimize(forward(net, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(32)->Arg(256);

void BM_Backward(benchmark::State& state) {
  const Network net = default_net();
  const auto idx = first_indices(static_cast<std::size_t>(state.range(0)));
  const Tensor x = glyphs().train.batch(idx);
  const auto y = glyphs().train.labels_at(idx);
  for (auto _ : state) benchmark::DoNotOptimize(backward(net, x, y));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Backward)->Arg(1)->Arg(32);

void BM_RegularizedStep(benchmark::State& state) {
  const Network net = default_net();
  const AnchorParams anchor(net.params());
  FisherDiagonal f{ParamSet(net.params().layers()), 1, ""};
  for (double& v : f.values.values()) v = 1e-3;
  const auto idx = first_indices(32);
  const Tensor x = glyphs().train.batch(idx);
  const auto y = glyphs().train.labels_at(idx);
  TrainLoopState st{net, 0.01, 0};
  for (auto _ : state) benchmark::DoNotOptimize(regularized_step(st, x, y, anchor, f, 100.0));
}
BENCHMARK(BM_RegularizedStep);

void BM_Fisher(benchmark::State& state) {
  const Network net = default_net();
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(compute_fisher(net, glyphs().train, n, 1));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Fisher)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_Corrupt(benchmark::State& state) {
  const auto c = static_cast<Corruption>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(corrupt(glyphs().test, {c, 5}, 3));
  state.SetLabel(std::string(to_string(c)));
}
BENCHMARK(BM_Corrupt)->DenseRange(1, 6)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
