#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "hitok/codebook.hpp"
#include "hitok/kernels.hpp"

namespace {

using namespace hitok;

std::vector<double> gaussian(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (double& x : v) x = nd(rng);
  return v;
}

LatentGrid random_grid(int channels, int side, std::uint64_t seed) {
  LatentGrid g(channels, side, side);
  const auto v = gaussian(g.values().size(), seed);
  std::copy(v.begin(), v.end(), g.values().begin());
  return g;
}

// Args: number of queries, codebook size. dim fixed at 32.
template <bool Parallel>
void BM_AssignNearest(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0)), k = static_cast<int>(state.range(1)), dim = 32;
  const Codebook cb(k, dim, Metric::L2, gaussian(static_cast<std::size_t>(k) * dim, 1));
  const auto q = gaussian(static_cast<std::size_t>(n) * dim, 2);
  std::vector<std::uint32_t> out(n);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::parallel::assign_nearest(q, cb.view(), out);
    else
      kernels::serial::assign_nearest(q, cb.view(), out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}

// Arg: source side; upsample 32 channels to 2x with bicubic taps.
template <bool Parallel>
void BM_Resample(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const LatentGrid src = random_grid(32, side, 3);
  const ResampleTaps taps = bicubic_taps(side, 2 * side);
  LatentGrid dst(32, 2 * side, 2 * side);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::parallel::resample(src, taps, taps, dst);
    else
      kernels::serial::resample(src, taps, taps, dst);
    benchmark::DoNotOptimize(dst.values().data());
  }
}

template <bool Parallel>
void BM_Conv3x3(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const LatentGrid src = random_grid(32, side, 4);
  const PhiParams phi = PhiParams::box(32);
  LatentGrid dst(32, side, side);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::parallel::conv3x3(src, phi, dst);
    else
      kernels::serial::conv3x3(src, phi, dst);
    benchmark::DoNotOptimize(dst.values().data());
  }
}

BENCHMARK(BM_AssignNearest<false>)->Name("assign_nearest/serial")->Args({1024, 512})->Args({4096, 4096});
BENCHMARK(BM_AssignNearest<true>)->Name("assign_nearest/openmp")->Args({1024, 512})->Args({4096, 4096});
BENCHMARK(BM_Resample<false>)->Name("resample/serial")->Arg(16)->Arg(64);
BENCHMARK(BM_Resample<true>)->Name("resample/openmp")->Arg(16)->Arg(64);
BENCHMARK(BM_Conv3x3<false>)->Name("conv3x3/serial")->Arg(32)->Arg(128);
BENCHMARK(BM_Conv3x3<true>)->Name("conv3x3/openmp")->Arg(32)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
