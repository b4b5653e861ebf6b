// Compares the OpenMP kernels against the serial reference loops.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "catintell/kernels.hpp"

using namespace catintell;

namespace {

std::vector<double> noise(std::size_t count, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> out(count);
  for (auto& v : out) v = dist(rng);
  return out;
}

ConvGeometry conv_case(int channels, int side, int kernel, int groups, int out_mult) {
  ConvGeometry g;
  g.batch = 1;
  g.in_channels = channels;
  g.in_h = side;
  g.in_w = side;
  g.out_channels = channels * out_mult;
  g.kernel_h = kernel;
  g.kernel_w = kernel;
  g.pad = kernel / 2;
  g.groups = groups;
  return g;
}

// Arguments: channels, side, kernel, groups (0 = depthwise), output multiplier.
ConvGeometry from_state(const benchmark::State& state) {
  const int channels = static_cast<int>(state.range(0));
  const int groups = state.range(3) == 0 ? channels : static_cast<int>(state.range(3));
  return conv_case(channels, static_cast<int>(state.range(1)), static_cast<int>(state.range(2)), groups,
                   static_cast<int>(state.range(4)));
}

template <bool Fast>
void BM_ConvForward(benchmark::State& state) {
  const ConvGeometry g = from_state(state);
  const auto in = noise(static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w, 1);
  const auto w = noise(g.weight_count(), 2);
  std::vector<double> out(static_cast<std::size_t>(g.out_channels) * g.out_h() * g.out_w());
  for (auto _ : state) {
    if constexpr (Fast) {
      kernels::conv2d_forward(g, in.data(), w.data(), nullptr, out.data());
    } else {
      reference::conv2d_forward(g, in.data(), w.data(), nullptr, out.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
  const double macs = static_cast<double>(out.size()) * g.in_per_group() * g.kernel_h * g.kernel_w;
  state.counters["GFLOPs"] = benchmark::Counter(2.0 * macs, benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}

template <bool Fast>
void BM_ConvBackward(benchmark::State& state) {
  const ConvGeometry g = from_state(state);
  const auto in = noise(static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w, 1);
  const auto w = noise(g.weight_count(), 2);
  const auto dout = noise(static_cast<std::size_t>(g.out_channels) * g.out_h() * g.out_w(), 3);
  std::vector<double> din(in.size()), dw(w.size());
  for (auto _ : state) {
    if constexpr (Fast) {
      kernels::conv2d_backward_input(g, dout.data(), w.data(), din.data());
      kernels::conv2d_backward_weight(g, dout.data(), in.data(), dw.data(), nullptr);
    } else {
      reference::conv2d_backward_input(g, dout.data(), w.data(), din.data());
      reference::conv2d_backward_weight(g, dout.data(), in.data(), dw.data(), nullptr);
    }
    benchmark::DoNotOptimize(din.data());
    benchmark::DoNotOptimize(dw.data());
  }
  const double macs = static_cast<double>(dout.size()) * g.in_per_group() * g.kernel_h * g.kernel_w;
  state.counters["GFLOPs"] = benchmark::Counter(4.0 * macs, benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}

void ConvShapes(benchmark::internal::Benchmark* b) {
  b->Args({32, 64, 1, 1, 4});   // dense-block expansion
  b->Args({128, 64, 1, 1, 1});  // wide pointwise
  b->Args({32, 64, 5, 0, 1});   // depthwise 5x5
  b->Args({64, 32, 3, 1, 1});   // upsampling 3x3
  b->Args({8, 64, 5, 1, 1});    // narrow dense 5x5
  b->Unit(benchmark::kMillisecond);
}

void BM_WindowAttention(benchmark::State& state, bool fast) {
  AttentionGeometry g;
  g.channels = 32;
  g.height = 32;
  g.width = 32;
  g.heads = 2;
  g.window = 8;
  g.table_window = 8;
  g.shift = static_cast<int>(state.range(0));
  const auto qkv = noise(static_cast<std::size_t>(3) * g.channels * g.height * g.width, 4);
  const auto table = noise(static_cast<std::size_t>(g.heads) * g.table_side() * g.table_side(), 5);
  std::vector<double> out(static_cast<std::size_t>(g.channels) * g.height * g.width);
  std::vector<double> probs(g.probs_count());
  for (auto _ : state) {
    if (fast) {
      kernels::window_attention_forward(g, qkv.data(), table.data(), out.data(), probs.data());
    } else {
      reference::window_attention_forward(g, qkv.data(), table.data(), out.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<true>)->Apply(ConvShapes);
BENCHMARK(BM_ConvForward<false>)->Apply(ConvShapes);
BENCHMARK(BM_ConvBackward<true>)->Apply(ConvShapes);
BENCHMARK(BM_ConvBackward<false>)->Apply(ConvShapes);
BENCHMARK_CAPTURE(BM_WindowAttention, kernel, true)->Arg(0)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_WindowAttention, reference, false)->Arg(0)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
