#include <benchmark/benchmark.h>

#include "thc/cluster_eval.hpp"
#include "thc/data.hpp"
#include "thc/model.hpp"
#include "thc/objective.hpp"
#include "thc/rng.hpp"

using namespace thc;

namespace {

Tensor random_square(int n, uint64_t seed) {
  Rng rng(seed);
  Tensor x(n, n);
  for (int i = 0; i < x.size(); ++i) x[i] = rng.normal();
  return x;
}

ThcModel layer_model(int n, int out, int heads, int d, Ablation ab) {
  ModelConfig cfg;
  cfg.input_size = n;
  cfg.schedule = {out};
  cfg.heads = heads;
  cfg.dk = d;
  cfg.dv = d;
  cfg.readout_hidden = d;
  cfg.ablation = ab;
  Rng rng(1);
  return ThcModel::init(cfg, rng);
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Tensor a = random_square(n, 1), b = random_square(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
}
BENCHMARK(BM_Matmul)->Arg(20)->Arg(90)->Arg(360);

static void BM_SoftmaxRows(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Tensor a = random_square(n, 3);
  for (auto _ : state) benchmark::DoNotOptimize(softmax_rows(a));
}
BENCHMARK(BM_SoftmaxRows)->Arg(90)->Arg(360);

// one attention layer at full resolution versus after coarsening to k nodes,
// the comparison behind the O(k^2 d + k d^2) complexity claim
static void BM_LayerForward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  ThcModel model = layer_model(n, n / 2, 4, 64, Ablation::full);
  Tensor x = random_square(n, 4);
  for (auto _ : state) {
    ForwardTrace t = forward(x, model, Mode::eval);
    benchmark::DoNotOptimize(t.final_logits);
  }
}
BENCHMARK(BM_LayerForward)->Arg(20)->Arg(90)->Arg(360)->Unit(benchmark::kMillisecond);

static void BM_ForwardBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  ThcModel model = layer_model(n, n / 2, 2, 16, Ablation::full);
  Tensor x = random_square(n, 5);
  LossWeights w;
  for (auto _ : state) {
    Tape tape;
    ModelVars vars = bind(tape, model);
    BatchVars b = forward_batch(tape, {&x}, model, vars, Mode::eval, nullptr);
    tape.backward(total_loss(tape, b, {1}, w).total);
    benchmark::DoNotOptimize(tape.grad(vars.flat[0]));
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(20)->Arg(60)->Unit(benchmark::kMillisecond);

static void BM_Lloyd(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Tensor x = random_square(n, 6);
  for (auto _ : state) benchmark::DoNotOptimize(lloyd(x, 6, 50, 7));
}
BENCHMARK(BM_Lloyd)->Arg(60)->Arg(180);

static void BM_Louvain(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  PlantedSpec spec;
  spec.nodes = n;
  spec.fine = 6;
  spec.coarse = 3;
  spec.sigma = 0.1;
  spec.seed = 8;
  Tensor adj = generate(spec, 1).samples[0].adjacency;
  for (auto _ : state) benchmark::DoNotOptimize(louvain(adj, 9));
}
BENCHMARK(BM_Louvain)->Arg(60)->Arg(180);

static void BM_Generate(benchmark::State& state) {
  PlantedSpec spec;
  spec.nodes = 60;
  spec.fine = 6;
  spec.coarse = 3;
  spec.sigma = 0.1;
  spec.class_shift = 0.15;
  spec.seed = 10;
  for (auto _ : state) benchmark::DoNotOptimize(generate(spec, 16));
}
BENCHMARK(BM_Generate)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
