#include <benchmark/benchmark.h>

#include <random>

#include "softquad/kernels.hpp"
#include "softquad/learn.hpp"

using namespace softquad;

namespace {

struct DenseCase {
  nn::Matrix<float> W, X, Y;
  nn::Vector<float> b;
  explicit DenseCase(int batch) {
    std::mt19937_64 rng(7);
    std::normal_distribution<float> n(0.0f, 1.0f);
    W = nn::Matrix<float>::NullaryExpr(128, 136, [&] { return n(rng); });
    X = nn::Matrix<float>::NullaryExpr(136, batch, [&] { return n(rng); });
    b = nn::Vector<float>::NullaryExpr(128, [&] { return n(rng); });
  }
};

void BM_DenseSerial(benchmark::State& st) {
  DenseCase c(static_cast<int>(st.range(0)));
  for (auto _ : st) {
    kernels::dense_forward_serial(c.W, c.b, c.X, nn::Activation::Relu, c.Y);
    benchmark::DoNotOptimize(c.Y.data());
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_DenseParallel(benchmark::State& st) {
  DenseCase c(static_cast<int>(st.range(0)));
  for (auto _ : st) {
    kernels::dense_forward(c.W, c.b, c.X, nn::Activation::Relu, c.Y);
    benchmark::DoNotOptimize(c.Y.data());
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

std::vector<learn::EpisodeSpec> specs(int n) {
  std::vector<learn::EpisodeSpec> s(n);
  for (int i = 0; i < n; ++i) s[i].env_seed = learn::derive_seed(1, 1, i);
  return s;
}

EnvConfig short_episodes() {
  EnvConfig cfg;
  cfg.episode_steps = 10;
  return cfg;
}

nn::Mlp<float> actor() {
  std::mt19937_64 rng(3);
  return learn::make_actor<float>(kObsDim, kActionDim, {128, 128}, nn::Activation::Relu, rng);
}

void BM_RolloutsSerial(benchmark::State& st) {
  const auto make = learn::locomotion_factory(short_episodes());
  const auto a = actor();
  const auto s = specs(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(learn::run_episodes_serial(make, a, s, {}));
}

void BM_RolloutsParallel(benchmark::State& st) {
  const auto make = learn::locomotion_factory(short_episodes());
  const auto a = actor();
  const auto s = specs(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(learn::run_episodes(make, a, s, {}, kernels::max_threads()));
}

}  // namespace

BENCHMARK(BM_DenseSerial)->Arg(32)->Arg(256)->Arg(1024);
BENCHMARK(BM_DenseParallel)->Arg(32)->Arg(256)->Arg(1024);
BENCHMARK(BM_RolloutsSerial)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RolloutsParallel)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
