#include <cmath>

#include "catintell/error.hpp"
#include "catintell/generator.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace catintell;
using catintell::testing::random_tensor;

namespace {

GeneratorConfig toy_config(int groups) {
  GeneratorConfig c;
  c.stages = 1;
  c.width = 2;
  c.encoder_blocks = 1;
  c.decoder_blocks = 1;
  c.bottleneck_blocks = 1;
  c.conv_groups = groups;
  return c;
}

GeneratorConfig small_config() {
  GeneratorConfig c;
  c.stages = 2;
  c.width = 4;
  c.encoder_blocks = 1;
  c.decoder_blocks = 1;
  c.bottleneck_blocks = 1;
  return c;
}

// Direct-loop grouped convolution with zero padding, stride 1, on one sample.
std::vector<double> naive_conv(const std::vector<double>& x, int cin, int h, int w, const Tensor& weight,
                               const Tensor* bias, int groups) {
  const int cout = weight.shape().n;
  const int k = weight.shape().h;
  const int pad = k / 2;
  const int in_per = cin / groups;
  const int out_per = cout / groups;
  std::vector<double> y(static_cast<std::size_t>(cout) * h * w, 0.0);
  for (int o = 0; o < cout; ++o) {
    const int g = o / out_per;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        double acc = bias ? bias->data()[o] : 0.0;
        for (int ci = 0; ci < in_per; ++ci) {
          const int c = g * in_per + ci;
          for (int u = 0; u < k; ++u) {
            for (int v = 0; v < k; ++v) {
              const int yy = i + u - pad;
              const int xx = j + v - pad;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              acc += weight.at(o, ci, u, v) * x[(static_cast<std::size_t>(c) * h + yy) * w + xx];
            }
          }
        }
        y[(static_cast<std::size_t>(o) * h + i) * w + j] = acc;
      }
    }
  }
  return y;
}

// Straight-line forward of one dense conv block: the second large conv is
// built as a single conv over the channel concatenation [x, y].
std::vector<double> reference_block(const DenseConvBlock& b, const std::vector<double>& x, int c, int h, int w,
                                    int groups) {
  std::vector<double> y = naive_conv(x, c, h, w, b.spatial.weight->value, &b.spatial.bias->value, groups);
  const int px = h * w;
  for (int p = 0; p < px; ++p) {
    double mean = 0.0;
    for (int ch = 0; ch < c; ++ch) mean += y[ch * px + p];
    mean /= c;
    double var = 0.0;
    for (int ch = 0; ch < c; ++ch) var += (y[ch * px + p] - mean) * (y[ch * px + p] - mean);
    var /= c;
    for (int ch = 0; ch < c; ++ch) {
      y[ch * px + p] = (y[ch * px + p] - mean) / std::sqrt(var + 1e-6) * b.norm.gamma->value.data()[ch] +
                       b.norm.beta->value.data()[ch];
    }
  }
  y = naive_conv(y, c, h, w, b.expand.weight->value, &b.expand.bias->value, 1);
  for (double& v : y) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  y = naive_conv(y, 4 * c, h, w, b.contract.weight->value, &b.contract.bias->value, 1);

  // Concatenate so each group of the 2C-input conv sees its x channels
  // followed by its y channels.
  const int per = c / groups;
  const int k = b.dense_input.weight->value.shape().h;
  std::vector<double> cat;
  Tensor wcat(Shape{c, 2 * per, k, k});
  for (int g = 0; g < groups; ++g) {
    for (int ci = 0; ci < per; ++ci) cat.insert(cat.end(), x.begin() + (g * per + ci) * px, x.begin() + (g * per + ci + 1) * px);
    for (int ci = 0; ci < per; ++ci) cat.insert(cat.end(), y.begin() + (g * per + ci) * px, y.begin() + (g * per + ci + 1) * px);
  }
  for (int o = 0; o < c; ++o) {
    for (int ci = 0; ci < per; ++ci) {
      for (int u = 0; u < k; ++u) {
        for (int v = 0; v < k; ++v) {
          wcat.at(o, ci, u, v) = b.dense_input.weight->value.at(o, ci, u, v);
          wcat.at(o, per + ci, u, v) = b.dense_branch.weight->value.at(o, ci, u, v);
        }
      }
    }
  }
  return naive_conv(cat, 2 * c, h, w, wcat, &b.dense_input.bias->value, groups);
}

void randomize(ParamStore& store, std::uint64_t seed) {
  for (const auto& p : store.items()) {
    p.var->value = random_tensor(p.var->value.shape(), seed++, -0.5, 0.5);
  }
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::UsageError;
}

}  // namespace

TEST_CASE("dense conv block matches a straight-line reimplementation") {
  for (int groups : {1, 2}) {
    ParamStore store;
    Rng rng(3);
    const DenseConvBlock b = make_dense_block(store, "b", 2, 5, groups, rng);
    randomize(store, 40);
    const Tensor x = random_tensor(Shape{1, 2, 4, 4}, 7);
    NoGradGuard guard;
    const Tensor got = b(constant(x))->value;
    const std::vector<double> want =
        reference_block(b, std::vector<double>(x.data().begin(), x.data().end()), 2, 4, 4, groups);
    CHECK(catintell::testing::max_abs_diff(got.data(), want) < 1e-6);
  }
}

TEST_CASE("dense conv block: zero in, zero out, shape preserved") {
  ParamStore store;
  Rng rng(1);
  const DenseConvBlock b = make_dense_block(store, "b", 4, 5, 4, rng);
  for (const auto& p : store.items()) {
    if (p.name.ends_with(".bias") || p.name.ends_with(".beta")) p.var->value = Tensor(p.var->value.shape());
  }
  NoGradGuard guard;
  const Tensor zero = b(constant(Tensor(Shape{1, 4, 6, 6})))->value;
  for (double v : zero.data()) CHECK(v == 0.0);
  for (auto [h, w] : {std::pair{1, 1}, {3, 7}, {9, 4}}) {
    CHECK(b(constant(random_tensor(Shape{2, 4, h, w}, 5)))->value.shape() == Shape{2, 4, h, w});
  }
}

TEST_CASE("toy generator parameter count matches the closed form") {
  // C = 2, k = 5, one stage, one block everywhere.
  //   in_proj        25*3*2 + 2                                   = 152
  //   dense block(c) spatial 25*c*c/g + c, norm 2c, expand 4c*c + 4c,
  //                  contract 4c*c + c, dense pair 2*25*c*c/g + c
  //   enc0.down      4*2*4 + 4                                    = 36
  //   dec0.up        9*4*2 + 2                                    = 74
  //   dec0.merge     4*2 + 2                                      = 10
  //   out_proj       25*2*3 + 3                                   = 153
  // dense: block(2) = 102+4+24+18+202 = 350, block(4) = 404+8+80+68+804 = 1364
  // depthwise: block(2) = 52+4+24+18+102 = 200, block(4) = 104+8+80+68+204 = 464
  Rng rng(0);
  CHECK(Generator(toy_config(1), rng).parameter_count() == 152u + 350 + 36 + 1364 + 74 + 10 + 350 + 153);
  CHECK(Generator(toy_config(0), rng).parameter_count() == 152u + 200 + 36 + 464 + 74 + 10 + 200 + 153);
  CHECK(Generator(toy_config(1), rng).parameter_count() == 2489u);
  CHECK(Generator(toy_config(0), rng).parameter_count() == 1289u);
}

TEST_CASE("published configurations fit the parameter budget") {
  Rng rng(0);
  const std::size_t res = Generator(GeneratorConfig::res(), rng).parameter_count();
  const std::size_t syn = Generator(GeneratorConfig::syn(), rng).parameter_count();
  CHECK(res >= 8'000'000u);
  CHECK(res <= 18'000'000u);
  CHECK(syn < res);
}

TEST_CASE("forward preserves shape for awkward sizes") {
  Rng rng(2);
  const Generator g(small_config(), rng);
  NoGradGuard guard;
  for (auto [h, w] : {std::pair{64, 64}, {100, 100}, {12, 20}, {5, 3}, {1, 1}}) {
    const Tensor out = g.forward(constant(random_tensor(Shape{2, 3, h, w}, 1, 0.0, 1.0)))->value;
    CHECK(out.shape() == Shape{2, 3, h, w});
  }
}

TEST_CASE("encoder features follow the stage size formula") {
  Rng rng(2);
  const GeneratorConfig cfg = small_config();
  const Generator g(cfg, rng);
  const auto feats = g.encoder_trace(random_tensor(Shape{1, 3, 32, 48}, 2, 0.0, 1.0));
  REQUIRE(feats.size() == static_cast<std::size_t>(cfg.stages));
  for (int i = 0; i < cfg.stages; ++i) {
    CHECK(feats[i].shape() == Shape{1, (2 << i) * cfg.width, 32 >> (i + 1), 48 >> (i + 1)});
  }
}

TEST_CASE("same seed gives the same model and output") {
  Rng r1(11);
  Rng r2(11);
  const Generator a(small_config(), r1);
  const Generator b(small_config(), r2);
  const Tensor x = random_tensor(Shape{1, 3, 16, 16}, 9, 0.0, 1.0);
  CHECK(catintell::testing::same_values(a.infer(x), b.infer(x)));
}

TEST_CASE("infer clamps to the unit range") {
  Rng rng(4);
  Generator g(small_config(), rng);
  randomize(g.params(), 100);
  const Tensor out = g.infer(random_tensor(Shape{1, 3, 16, 16}, 3, 0.0, 1.0));
  double lo = 1.0;
  double hi = 0.0;
  for (double v : out.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= 0.0);
  CHECK(hi <= 1.0);
  CHECK(lo < hi);
}

TEST_CASE("global residual gives identity when the output projection is zero") {
  Rng rng(4);
  Generator g(small_config(), rng);
  g.params().get("out_proj.weight")->value = Tensor(g.params().get("out_proj.weight")->value.shape());
  g.params().get("out_proj.bias")->value = Tensor(g.params().get("out_proj.bias")->value.shape());
  const Tensor x = random_tensor(Shape{1, 3, 10, 14}, 3, 0.0, 1.0);
  CHECK(catintell::testing::max_abs_diff(g.infer(x).data(), x.data()) < 1e-12);
}

TEST_CASE("parameter gradients agree with finite differences") {
  GeneratorConfig cfg;
  cfg.stages = 2;
  cfg.width = 2;
  cfg.encoder_blocks = 1;
  cfg.decoder_blocks = 1;
  cfg.bottleneck_blocks = 1;
  Rng rng(6);
  Generator g(cfg, rng);
  const Var x = constant(random_tensor(Shape{1, 3, 16, 16}, 21, 0.0, 1.0));
  const Var zero = constant(Tensor(Shape{1, 3, 16, 16}));
  auto loss = [&] { return ag::squared_error(g.forward(x), zero, 1.0 / (3 * 16 * 16)); };
  const auto r = catintell::testing::check_param_gradients(g.params(), loss, 60, 1e-3, 1e-3, 8);
  CHECK(r.pass_rate() >= 0.95);
}

TEST_CASE("generator errors") {
  Rng rng(0);
  GeneratorConfig bad = small_config();
  bad.conv_groups = 3;
  CHECK(kind_of([&] { Generator(bad, rng); }) == ErrorKind::ConfigError);
  bad = small_config();
  bad.stages = 0;
  CHECK(kind_of([&] { Generator(bad, rng); }) == ErrorKind::ConfigError);
  const Generator g(small_config(), rng);
  CHECK(kind_of([&] { g.infer(Tensor(Shape{1, 1, 8, 8})); }) == ErrorKind::ShapeError);
}
