// Serial reference kernels against the parallel ones, plus code decoding.

#include <benchmark/benchmark.h>

#include <vector>

#include "popcode/code.hpp"
#include "popcode/kernels.hpp"
#include "popcode/rng.hpp"

using namespace popcode;
namespace k = popcode::kernels;

namespace {

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return v;
}

// args: batch, in channels, size, out channels
k::ConvShape conv_shape(const benchmark::State& st) {
  k::ConvShape s;
  s.batch = st.range(0);
  s.in_channels = st.range(1);
  s.in_h = s.in_w = st.range(2);
  s.out_channels = st.range(3);
  s.kernel = 3;
  s.pad = 1;
  return s;
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& st) {
  const auto s = conv_shape(st);
  const auto in = random_floats(s.batch * s.in_channels * s.in_h * s.in_w, 1);
  const auto w = random_floats(s.out_channels * s.patch(), 2);
  const auto b = random_floats(s.out_channels, 3);
  std::vector<float> out(s.batch * s.out_channels * s.out_h() * s.out_w());
  k::ConvWorkspace<float> ws;
  for (auto _ : st) {
    if constexpr (Parallel)
      k::parallel::conv2d_forward<float>(s, in, w, b, out, ws);
    else
      k::serial::conv2d_forward<float>(s, in, w, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(st.iterations() * 2 * s.batch * s.out_channels * s.out_h() * s.out_w() * s.patch());
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& st) {
  const auto s = conv_shape(st);
  const auto in = random_floats(s.batch * s.in_channels * s.in_h * s.in_w, 1);
  const auto w = random_floats(s.out_channels * s.patch(), 2);
  const auto gy = random_floats(s.batch * s.out_channels * s.out_h() * s.out_w(), 3);
  std::vector<float> gx(in.size()), gw(w.size()), gb(s.out_channels);
  k::ConvWorkspace<float> ws;
  for (auto _ : st) {
    if constexpr (Parallel)
      k::parallel::conv2d_backward<float>(s, in, w, gy, gx, gw, gb, ws);
    else
      k::serial::conv2d_backward<float>(s, in, w, gy, gx, gw, gb);
    benchmark::DoNotOptimize(gw.data());
  }
}

template <bool Parallel>
void BM_Linear(benchmark::State& st) {
  const std::size_t n = st.range(0), in_f = st.range(1), out_f = st.range(2);
  const auto x = random_floats(n * in_f, 1);
  const auto w = random_floats(in_f * out_f, 2);
  const auto b = random_floats(out_f, 3);
  std::vector<float> y(n * out_f);
  for (auto _ : st) {
    if constexpr (Parallel)
      k::parallel::linear_forward<float>(n, in_f, out_f, x, w, b, y);
    else
      k::serial::linear_forward<float>(n, in_f, out_f, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_Argmax(benchmark::State& st) {
  Rng rng(4);
  std::vector<double> v(st.range(0));
  for (auto& x : v) x = rng.uniform();
  for (auto _ : st) {
    if constexpr (Parallel)
      benchmark::DoNotOptimize(k::parallel::argmax(v));
    else
      benchmark::DoNotOptimize(k::serial::argmax(v));
  }
}

void BM_Decode(benchmark::State& st) {
  const auto grid = std::make_shared<const NeuronGrid>(2562, 36);
  Rng rng(5);
  const auto code = target_code(RotationMatrix::random(rng), SymmetrySpec::none(), grid);
  for (auto _ : st) benchmark::DoNotOptimize(decode(code));
}

}  // namespace

#define CONV_ARGS Args({64, 1, 64, 32})->Args({64, 32, 32, 64})->Args({64, 64, 16, 128})->Unit(benchmark::kMillisecond)
BENCHMARK(BM_ConvForward<false>)->CONV_ARGS;
BENCHMARK(BM_ConvForward<true>)->CONV_ARGS;
BENCHMARK(BM_ConvBackward<false>)->CONV_ARGS;
BENCHMARK(BM_ConvBackward<true>)->CONV_ARGS;
BENCHMARK(BM_Linear<false>)->Args({64, 8192, 256})->Args({64, 256, 128});
BENCHMARK(BM_Linear<true>)->Args({64, 8192, 256})->Args({64, 256, 128});
BENCHMARK(BM_Argmax<false>)->Arg(10248)->Arg(92232);
BENCHMARK(BM_Argmax<true>)->Arg(10248)->Arg(92232);
BENCHMARK(BM_Decode)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
