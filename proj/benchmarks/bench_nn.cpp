#include <benchmark/benchmark.h>

#include "kd/nn/functional.hpp"
#include "kd/nn/ops.hpp"
#include "kd/nn/param_store.hpp"

namespace {

using namespace kd::nn;

void BM_MatmulForwardBackward(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(0);
  const Var a = Var::leaf(random_normal(n, n, 1.0, rng));
  const Var b = Var::leaf(random_normal(n, n, 1.0, rng));
  for (auto _ : state) {
    a.node()->grad.resize(0, 0);
    b.node()->grad.resize(0, 0);
    backward(sum(matmul(a, b)));
    benchmark::DoNotOptimize(a.grad().data());
  }
}
BENCHMARK(BM_MatmulForwardBackward)->Arg(16)->Arg(64);

void BM_CausalAttention(benchmark::State& state) {
  const auto t = state.range(0);
  Rng rng(1);
  const Var q = Var::leaf(random_normal(t, 32, 1.0, rng));
  const Var k = Var::leaf(random_normal(t, 32, 1.0, rng));
  const Var v = Var::leaf(random_normal(t, 32, 1.0, rng));
  const Matrix mask = causal_mask(t);
  for (auto _ : state) {
    const Var out = attention(q, k, v, &mask);
    backward(sum(out));
    benchmark::DoNotOptimize(q.grad().data());
  }
}
BENCHMARK(BM_CausalAttention)->Arg(10)->Arg(64);

void BM_SoftmaxTemp(benchmark::State& state) {
  Rng rng(2);
  const Matrix l = random_normal(1, state.range(0), 1.0, rng);
  const std::vector<double> logits(l.data(), l.data() + l.size());
  for (auto _ : state) benchmark::DoNotOptimize(softmax_temp(logits, 2.0).total());
}
BENCHMARK(BM_SoftmaxTemp)->Arg(30)->Arg(2513);

void BM_TopK(benchmark::State& state) {
  Rng rng(3);
  const Matrix l = random_normal(1, state.range(0), 1.0, rng);
  const std::vector<double> scores(l.data(), l.data() + l.size());
  for (auto _ : state) benchmark::DoNotOptimize(top_k_indices(scores, 50));
}
BENCHMARK(BM_TopK)->Arg(100)->Arg(2513);

}  // namespace
