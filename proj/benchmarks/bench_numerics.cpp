#include <benchmark/benchmark.h>

#include "divnorm/matrix.hpp"
#include "divnorm/numerics.hpp"
#include "divnorm/rng.hpp"
#include "divnorm/whitening.hpp"

using namespace divnorm;

namespace {

Matrix random_batch(int n, int d, std::uint64_t seed) {
  SeededRng rng(seed);
  Matrix x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = rng.normal();
  return x;
}

Matrix random_spd(int d, std::uint64_t seed) {
  const Matrix x = random_batch(4 * d, d, seed);
  return covariance(x).cov;
}

void BM_Covariance(benchmark::State& state) {
  const Matrix x = random_batch(256, static_cast<int>(state.range(0)), 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(covariance(x));
  }
}
BENCHMARK(BM_Covariance)->Arg(16)->Arg(32)->Arg(64);

void BM_ExactInvSqrt(benchmark::State& state) {
  const Matrix spd = random_spd(static_cast<int>(state.range(0)), 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(exact_inv_sqrt(spd));
  }
}
BENCHMARK(BM_ExactInvSqrt)->Arg(8)->Arg(16)->Arg(32)->Arg(64);

void BM_NewtonSchulzInvSqrt(benchmark::State& state) {
  const Matrix spd = random_spd(static_cast<int>(state.range(0)), 3);
  const int iters = static_cast<int>(state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(newton_schulz_inv_sqrt(spd, iters));
  }
}
BENCHMARK(BM_NewtonSchulzInvSqrt)
    ->Args({16, 5})
    ->Args({32, 5})
    ->Args({64, 5})
    ->Args({64, 8});

void BM_WhitenTrainForward(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const bool exact = state.range(1) != 0;
  const Matrix x = random_batch(256, d, 4);
  for (auto _ : state) {
    WhiteningState st = WhiteningState::create(d);
    st.method = exact ? WhitenMethod::exact : WhitenMethod::newton_schulz;
    benchmark::DoNotOptimize(whiten(x, st, nullptr, false));
  }
}
BENCHMARK(BM_WhitenTrainForward)->Args({16, 0})->Args({16, 1})->Args({64, 0})->Args({64, 1});

void BM_WhitenBackward(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const Matrix x = random_batch(64, d, 5);
  const Matrix grad = random_batch(64, d, 6);
  WhiteningState st = WhiteningState::create(d);
  WhitenContext ctx;
  whiten(x, st, &ctx, false);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ctx.backward(grad));
  }
}
BENCHMARK(BM_WhitenBackward)->Arg(16)->Arg(64);

}  // namespace
