#include <benchmark/benchmark.h>

#include <random>

#include "kd/metrics/metrics.hpp"

namespace {

using namespace kd;

std::vector<metrics::PredictionRecord> records(int n, int classes) {
  std::mt19937_64 rng(0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<metrics::PredictionRecord> out;
  for (int i = 0; i < n; ++i) {
    std::vector<double> p(static_cast<std::size_t>(classes));
    double s = 0.0;
    for (double& x : p) s += (x = u(rng));
    for (double& x : p) x /= s;
    out.push_back(metrics::make_record("r", nn::ProbDist(std::move(p)), static_cast<int>(rng() % classes), 5));
  }
  return out;
}

void BM_Evaluate(benchmark::State& state) {
  const auto recs = records(static_cast<int>(state.range(0)), 300);
  std::set<int> ms;
  for (int c = 0; c < 300; c += 2) ms.insert(c);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::evaluate(recs, ms).size());
}
BENCHMARK(BM_Evaluate)->Arg(500)->Arg(10000);

}  // namespace
