#include <cmath>

#include "catintell/error.hpp"
#include "catintell/kernels.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace catintell;
using catintell::testing::max_abs_diff;
using catintell::testing::random_values;

namespace {

struct ConvCase {
  int batch, cin, h, w, cout, k, stride, pad, groups;
};

ConvGeometry geometry(const ConvCase& c) {
  ConvGeometry g;
  g.batch = c.batch;
  g.in_channels = c.cin;
  g.in_h = c.h;
  g.in_w = c.w;
  g.out_channels = c.cout;
  g.kernel_h = c.k;
  g.kernel_w = c.k;
  g.stride = c.stride;
  g.pad = c.pad;
  g.groups = c.groups;
  return g;
}

const ConvCase kCases[] = {
    {2, 3, 9, 7, 5, 5, 1, 2, 1},    // dense 5x5 projection
    {1, 6, 8, 8, 10, 1, 1, 0, 1},   // pointwise
    {2, 4, 10, 6, 8, 2, 2, 0, 1},   // stride-2 downsampling
    {1, 3, 16, 16, 4, 4, 4, 0, 1},  // patch embedding
    {2, 6, 7, 9, 6, 5, 1, 2, 6},    // depthwise 5x5
    {1, 4, 8, 8, 4, 3, 1, 1, 4},    // depthwise 3x3
    {1, 8, 9, 9, 4, 3, 1, 1, 2},    // two groups
    {2, 4, 9, 8, 4, 3, 2, 1, 2},    // strided grouped
    {1, 2, 3, 3, 3, 5, 1, 2, 1},    // kernel larger than image
    {1, 37, 5, 5, 9, 3, 1, 1, 1},   // odd channel counts exercise gemm tails
};

}  // namespace

TEST_CASE("conv forward matches the serial reference") {
  for (const auto& c : kCases) {
    const ConvGeometry g = geometry(c);
    const auto in = random_values(static_cast<std::size_t>(g.batch) * g.in_channels * g.in_h * g.in_w, 1);
    const auto wt = random_values(g.weight_count(), 2);
    const auto bias = random_values(g.out_channels, 3);
    const std::size_t out_count = static_cast<std::size_t>(g.batch) * g.out_channels * g.out_h() * g.out_w();
    std::vector<double> fast(out_count), slow(out_count);
    kernels::conv2d_forward(g, in.data(), wt.data(), bias.data(), fast.data());
    reference::conv2d_forward(g, in.data(), wt.data(), bias.data(), slow.data());
    CHECK(max_abs_diff(fast, slow) < 1e-12);
  }
}

TEST_CASE("conv backward passes match the serial reference") {
  for (const auto& c : kCases) {
    const ConvGeometry g = geometry(c);
    const std::size_t in_count = static_cast<std::size_t>(g.batch) * g.in_channels * g.in_h * g.in_w;
    const std::size_t out_count = static_cast<std::size_t>(g.batch) * g.out_channels * g.out_h() * g.out_w();
    const auto in = random_values(in_count, 4);
    const auto wt = random_values(g.weight_count(), 5);
    const auto dout = random_values(out_count, 6);

    std::vector<double> din_fast(in_count, 0.5), din_slow(in_count, 0.5);
    kernels::conv2d_backward_input(g, dout.data(), wt.data(), din_fast.data());
    reference::conv2d_backward_input(g, dout.data(), wt.data(), din_slow.data());
    CHECK(max_abs_diff(din_fast, din_slow) < 1e-12);

    std::vector<double> dw_fast(g.weight_count(), 0.25), dw_slow(g.weight_count(), 0.25);
    std::vector<double> db_fast(g.out_channels, 0.0), db_slow(g.out_channels, 0.0);
    kernels::conv2d_backward_weight(g, dout.data(), in.data(), dw_fast.data(), db_fast.data());
    reference::conv2d_backward_weight(g, dout.data(), in.data(), dw_slow.data(), db_slow.data());
    CHECK(max_abs_diff(dw_fast, dw_slow) < 1e-11);
    CHECK(max_abs_diff(db_fast, db_slow) < 1e-11);
  }
}

TEST_CASE("reference conv backward agrees with finite differences") {
  const ConvGeometry g = geometry({1, 2, 5, 4, 3, 3, 2, 1, 1});
  const std::size_t in_count = static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w;
  const std::size_t out_count = static_cast<std::size_t>(g.out_channels) * g.out_h() * g.out_w();
  auto in = random_values(in_count, 7);
  auto wt = random_values(g.weight_count(), 8);
  const auto probe = random_values(out_count, 9);
  auto objective = [&]() {
    std::vector<double> out(out_count);
    reference::conv2d_forward(g, in.data(), wt.data(), nullptr, out.data());
    double acc = 0.0;
    for (std::size_t i = 0; i < out_count; ++i) acc += out[i] * probe[i];
    return acc;
  };
  std::vector<double> din(in_count, 0.0), dw(g.weight_count(), 0.0);
  reference::conv2d_backward_input(g, probe.data(), wt.data(), din.data());
  reference::conv2d_backward_weight(g, probe.data(), in.data(), dw.data(), nullptr);
  for (std::size_t i = 0; i < in_count; ++i) {
    CHECK(din[i] == doctest::Approx(catintell::testing::numeric_derivative(in[i], objective, 1e-5)).epsilon(1e-7));
  }
  for (std::size_t i = 0; i < dw.size(); ++i) {
    CHECK(dw[i] == doctest::Approx(catintell::testing::numeric_derivative(wt[i], objective, 1e-5)).epsilon(1e-7));
  }
}

TEST_CASE("gemm handles tails in every dimension") {
  const int m = 7, n = 13, k = 300;
  const auto a = random_values(static_cast<std::size_t>(m) * k, 10);
  const auto b = random_values(static_cast<std::size_t>(k) * n, 11);
  std::vector<double> c(static_cast<std::size_t>(m) * n, 1.0);
  kernels::gemm_acc(m, n, k, a.data(), k, b.data(), n, c.data(), n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double expect = 1.0;
      for (int p = 0; p < k; ++p) expect += a[i * k + p] * b[p * n + j];
      CHECK(c[i * n + j] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("layer norm forward matches reference; backward matches finite differences") {
  const int batch = 2, channels = 5, pixels = 6;
  auto in = random_values(static_cast<std::size_t>(batch) * channels * pixels, 12, -2.0, 2.0);
  auto gamma = random_values(channels, 13);
  auto beta = random_values(channels, 14);
  std::vector<double> fast(in.size()), slow(in.size()), mean(batch * pixels), rstd(batch * pixels);
  kernels::layer_norm_forward(batch, channels, pixels, in.data(), gamma.data(), beta.data(), 1e-6,
                              fast.data(), mean.data(), rstd.data());
  reference::layer_norm_forward(batch, channels, pixels, in.data(), gamma.data(), beta.data(), 1e-6, slow.data());
  CHECK(max_abs_diff(fast, slow) < 1e-12);

  const auto probe = random_values(in.size(), 15);
  auto objective = [&]() {
    std::vector<double> out(in.size());
    reference::layer_norm_forward(batch, channels, pixels, in.data(), gamma.data(), beta.data(), 1e-6, out.data());
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * probe[i];
    return acc;
  };
  std::vector<double> din(in.size(), 0.0), dg(channels, 0.0), db(channels, 0.0);
  kernels::layer_norm_backward(batch, channels, pixels, in.data(), gamma.data(), mean.data(), rstd.data(),
                               probe.data(), din.data(), dg.data(), db.data());
  for (std::size_t i = 0; i < in.size(); ++i) {
    CHECK(din[i] == doctest::Approx(catintell::testing::numeric_derivative(in[i], objective, 1e-6)).epsilon(1e-6));
  }
  for (int c = 0; c < channels; ++c) {
    CHECK(dg[c] == doctest::Approx(catintell::testing::numeric_derivative(gamma[c], objective, 1e-6)).epsilon(1e-6));
    CHECK(db[c] == doctest::Approx(catintell::testing::numeric_derivative(beta[c], objective, 1e-6)).epsilon(1e-6));
  }
}

TEST_CASE("gelu derivative") {
  std::vector<double> x{-3.0, -0.7, 0.0, 0.4, 2.5};
  std::vector<double> y(x.size());
  kernels::gelu_forward(x.size(), x.data(), y.data());
  CHECK(y[2] == 0.0);
  CHECK(y[4] == doctest::Approx(2.5 * 0.5 * (1.0 + std::erf(2.5 / std::sqrt(2.0)))));
  std::vector<double> ones(x.size(), 1.0), d(x.size(), 0.0);
  kernels::gelu_backward(x.size(), x.data(), ones.data(), d.data());
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto f = [&]() {
      double out;
      kernels::gelu_forward(1, &x[i], &out);
      return out;
    };
    CHECK(d[i] == doctest::Approx(catintell::testing::numeric_derivative(x[i], f, 1e-6)).epsilon(1e-7));
  }
}

TEST_CASE("window attention forward matches the rolled-grid reference") {
  struct Case {
    int h, w, channels, heads, window, table_window, shift;
  };
  const Case cases[] = {
      {8, 8, 4, 2, 4, 4, 0},
      {8, 8, 4, 2, 4, 4, 2},
      {12, 8, 6, 3, 4, 4, 1},
      {4, 4, 4, 1, 2, 4, 0},  // effective window smaller than the bias table
  };
  for (const auto& c : cases) {
    AttentionGeometry g;
    g.batch = 2;
    g.channels = c.channels;
    g.height = c.h;
    g.width = c.w;
    g.heads = c.heads;
    g.window = c.window;
    g.table_window = c.table_window;
    g.shift = c.shift;
    const auto qkv = random_values(static_cast<std::size_t>(g.batch) * 3 * g.channels * g.height * g.width, 21);
    const auto table = random_values(static_cast<std::size_t>(g.heads) * g.table_side() * g.table_side(), 22);
    std::vector<double> fast(static_cast<std::size_t>(g.batch) * g.channels * g.height * g.width);
    std::vector<double> slow(fast.size());
    std::vector<double> probs(g.probs_count());
    kernels::window_attention_forward(g, qkv.data(), table.data(), fast.data(), probs.data());
    reference::window_attention_forward(g, qkv.data(), table.data(), slow.data());
    CHECK(max_abs_diff(fast, slow) < 1e-12);
  }
}

TEST_CASE("window attention backward agrees with finite differences") {
  AttentionGeometry g;
  g.batch = 1;
  g.channels = 4;
  g.height = 4;
  g.width = 4;
  g.heads = 2;
  g.window = 2;
  g.table_window = 2;
  g.shift = 1;
  auto qkv = random_values(static_cast<std::size_t>(3) * g.channels * g.height * g.width, 31);
  auto table = random_values(static_cast<std::size_t>(g.heads) * g.table_side() * g.table_side(), 32);
  const std::size_t out_count = static_cast<std::size_t>(g.channels) * g.height * g.width;
  const auto probe = random_values(out_count, 33);
  auto objective = [&]() {
    std::vector<double> out(out_count);
    reference::window_attention_forward(g, qkv.data(), table.data(), out.data());
    double acc = 0.0;
    for (std::size_t i = 0; i < out_count; ++i) acc += out[i] * probe[i];
    return acc;
  };
  std::vector<double> out(out_count), probs(g.probs_count());
  kernels::window_attention_forward(g, qkv.data(), table.data(), out.data(), probs.data());
  std::vector<double> dqkv(qkv.size(), 0.0), dtable(table.size(), 0.0);
  kernels::window_attention_backward(g, qkv.data(), table.data(), probs.data(), probe.data(), dqkv.data(),
                                     dtable.data());
  for (std::size_t i = 0; i < qkv.size(); ++i) {
    CHECK(dqkv[i] == doctest::Approx(catintell::testing::numeric_derivative(qkv[i], objective, 1e-6)).epsilon(1e-6));
  }
  for (std::size_t i = 0; i < table.size(); ++i) {
    CHECK(dtable[i] == doctest::Approx(catintell::testing::numeric_derivative(table[i], objective, 1e-6)).epsilon(1e-6));
  }
}

TEST_CASE("invalid geometry is rejected") {
  ConvGeometry g = geometry({1, 3, 4, 4, 4, 3, 1, 1, 2});
  CHECK_THROWS_AS(g.validate(), catintell::Error);
  AttentionGeometry a;
  a.height = 5;
  a.width = 4;
  a.window = 2;
  a.table_window = 2;
  CHECK_THROWS_AS(a.validate(), catintell::Error);
}
