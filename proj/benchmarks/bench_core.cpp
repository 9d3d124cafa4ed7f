#include <benchmark/benchmark.h>

#include <random>

#include "sppr/lstm.hpp"
#include "sppr/metrics.hpp"
#include "sppr/trainer.hpp"

namespace {

using namespace sppr;

Tensor random_tensor(const Shape& shape, std::uint64_t seed, bool tracked = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = g(rng);
  return Tensor::from(shape, std::move(v), tracked);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_AffineBackward(benchmark::State& state) {
  Tensor x = random_tensor({128, 138}, 1), w = random_tensor({138, 256}, 2, true),
         b = random_tensor({1, 256}, 3, true);
  for (auto _ : state) {
    Tensor loss = sum(affine(x, w, b));
    backward(loss);
    w.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_AffineBackward);

// Forward pass of the releaser over one day, B rows.
void BM_ReleaserForward(benchmark::State& state) {
  const double width = state.range(0) / 100.0;
  const auto cfg = releaser_config(8, width);
  ModelParams p = init_params(cfg, 1);
  p.set_tracked(false);
  Tensor seq = random_tensor({64, 24, cfg.input_dim}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(stack_forward(seq, p));
}
BENCHMARK(BM_ReleaserForward)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_ReleaserForwardBackward(benchmark::State& state) {
  const auto cfg = releaser_config(8, state.range(0) / 100.0);
  ModelParams p = init_params(cfg, 1);
  Tensor seq = random_tensor({64, 24, cfg.input_dim}, 2);
  for (auto _ : state) {
    Tensor loss = sum(stack_forward(seq, p));
    backward(loss);
    p.zero_grad();
  }
}
BENCHMARK(BM_ReleaserForwardBackward)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_KsgMi(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor x = random_tensor({n, 1}, 1), z = random_tensor({n, 1}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ksg_mi(x, z));
}
BENCHMARK(BM_KsgMi)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_OuterIteration(benchmark::State& state) {
  static const WindowedDataset data = normalize(split(synthesize_dataset(400, 1), 1));
  TrainerConfig c;
  c.width_scale = 0.5;
  c.batch_size = static_cast<std::size_t>(state.range(0));
  c.early_stopping = false;
  AdversarialTrainer t(data, c);
  for (auto _ : state) {
    t.adversary_inner_steps();
    benchmark::DoNotOptimize(t.outer_step());
  }
}
BENCHMARK(BM_OuterIteration)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
