#include "lcnet/data.hpp"
#include "lcnet/lipo.hpp"
#include "lcnet/models.hpp"
#include "lcnet/net.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace lcnet;

ParamSet bench_net(int hidden, int input) {
  NetShape shape{.input_dim = input, .hidden_dim = hidden, .residual_blocks = 2, .output_dim = 1};
  return init_he(shape, 42);
}

void BM_ForwardBatch(benchmark::State& state) {
  const int hidden = static_cast<int>(state.range(0));
  const long batch = state.range(1);
  const ParamSet p = bench_net(hidden, 3);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Matrix z(3, batch);
  for (long i = 0; i < z.size(); ++i) z.data()[i] = g(rng);
  for (auto _ : state) {
    const Matrix y = forward(p, z);
    benchmark::DoNotOptimize(y.sum());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_ForwardBatch)->Args({128, 1024})->Args({128, 6000})->Args({256, 1024});

void BM_ForwardBackwardBatch(benchmark::State& state) {
  const int hidden = static_cast<int>(state.range(0));
  const long batch = state.range(1);
  const ParamSet p = bench_net(hidden, 3);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Matrix z(3, batch);
  for (long i = 0; i < z.size(); ++i) z.data()[i] = g(rng);
  const Matrix upstream = Matrix::Ones(1, batch) / double(batch);
  for (auto _ : state) {
    ForwardTrace trace;
    forward(p, z, &trace);
    const GradientSet grads = backward(p, trace, upstream);
    benchmark::DoNotOptimize(grads.dweights[0](0, 0));
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_ForwardBackwardBatch)->Args({128, 1024})->Args({128, 6000});

void BM_LipoQuadratic(benchmark::State& state) {
  HyperBox box;
  box.dims.push_back({"x", 0.0, 1.0});
  box.dims.push_back({"y", 0.0, 1.0});
  const auto objective = [](const Vector& p) {
    return (p(0) - 0.3) * (p(0) - 0.3) + (p(1) - 0.7) * (p(1) - 0.7);
  };
  for (auto _ : state) {
    const LipoResult r = lipo_minimize(objective, box, 25, 7);
    benchmark::DoNotOptimize(r.best_value);
  }
}
BENCHMARK(BM_LipoQuadratic);

void BM_GenFrequency(benchmark::State& state) {
  for (auto _ : state) {
    const auto data = gen_frequency(50, 5000, 1000, 0.1, 3);
    benchmark::DoNotOptimize(data.train.y.sum());
  }
  state.SetItemsProcessed(state.iterations() * 6000);
}
BENCHMARK(BM_GenFrequency);

}  // namespace

BENCHMARK_MAIN();
