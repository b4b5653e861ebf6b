#include <cmath>

#include "catintell/baseline.hpp"
#include "catintell/error.hpp"
#include "catintell/perceptual.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace catintell;
using catintell::testing::random_tensor;
using catintell::testing::TempDir;

namespace {

ExtractorConfig narrow(bool bias = true) {
  ExtractorConfig c;
  c.widths = {4, 8, 8, 16};
  c.bias = bias;
  return c;
}

Image random_image(int h, int w, std::uint64_t seed) {
  Image img(h, w);
  img.pixels = catintell::testing::random_values(img.pixels.size(), seed, 0.0, 1.0);
  return img;
}

// Gram entries by a double loop over pixels, one sample.
std::vector<double> naive_gram(const Tensor& f, int n) {
  const int c = f.shape().c;
  const int h = f.shape().h;
  const int w = f.shape().w;
  std::vector<double> g(static_cast<std::size_t>(c) * c, 0.0);
  for (int a = 0; a < c; ++a) {
    for (int b = 0; b < c; ++b) {
      double acc = 0.0;
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) acc += f.at(n, a, i, j) * f.at(n, b, i, j);
      }
      g[a * c + b] = acc / (h * w);
    }
  }
  return g;
}

}  // namespace

TEST_CASE("gram of a hand example") {
  Tensor f(Shape{1, 2, 2, 2});
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) f.at(0, 0, i, j) = 1.0;
  }
  const Tensor g = ag::gram(constant(f))->value;
  CHECK(g.shape() == Shape{1, 1, 2, 2});
  CHECK(g.at(0, 0, 0, 0) == 1.0);
  CHECK(g.at(0, 0, 0, 1) == 0.0);
  CHECK(g.at(0, 0, 1, 0) == 0.0);
  CHECK(g.at(0, 0, 1, 1) == 0.0);
}

TEST_CASE("gram matches a double-loop oracle and is symmetric PSD") {
  const Tensor f = random_tensor(Shape{2, 2, 3, 3}, 4);
  const Tensor g = ag::gram(constant(f))->value;
  for (int n = 0; n < 2; ++n) {
    const auto want = naive_gram(f, n);
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) CHECK(std::abs(g.at(n, 0, a, b) - want[a * 2 + b]) < 1e-6);
    }
  }
  const Tensor big = ag::gram(constant(random_tensor(Shape{1, 6, 5, 4}, 9)))->value;
  for (int a = 0; a < 6; ++a) {
    CHECK(big.at(0, 0, a, a) >= 0.0);
    for (int b = 0; b < 6; ++b) CHECK(big.at(0, 0, a, b) == doctest::Approx(big.at(0, 0, b, a)).epsilon(1e-14));
  }
  // Positive semi-definite: v' G v >= 0 for random v.
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto v = catintell::testing::random_values(6, s);
    double q = 0.0;
    for (int a = 0; a < 6; ++a) {
      for (int b = 0; b < 6; ++b) q += v[a] * big.at(0, 0, a, b) * v[b];
    }
    CHECK(q >= -1e-12);
  }
}

TEST_CASE("taps sit at strides 4, 8, 16 and 32") {
  Rng rng(1);
  const FeatureExtractor ex(narrow(), rng);
  const auto maps = ex.extract_features(random_image(256, 256, 2));
  REQUIRE(maps.size() == 4u);
  const int sides[4] = {64, 32, 16, 8};
  for (int t = 0; t < 4; ++t) {
    CHECK(maps[t].shape().h == sides[t]);
    CHECK(maps[t].shape().w == sides[t]);
    CHECK(maps[t].shape().c == narrow().widths[t]);
    for (double v : maps[t].data()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("bias-free extractor maps a zero image to zero features") {
  Rng rng(1);
  const FeatureExtractor ex(narrow(false), rng);
  for (const Tensor& m : ex.extract_features(Image(64, 64, 0.0))) {
    for (double v : m.data()) CHECK(v == 0.0);
  }
}

TEST_CASE("features are deterministic") {
  Rng rng(1);
  const FeatureExtractor ex(narrow(), rng);
  const Image img = random_image(48, 48, 6);
  const auto a = ex.extract_features(img);
  const auto b = ex.extract_features(img);
  for (std::size_t t = 0; t < a.size(); ++t) CHECK(catintell::testing::same_values(a[t], b[t]));
}

TEST_CASE("fp loss: zero on equal inputs, symmetric, and matches a naive oracle") {
  Rng rng(3);
  FeatureExtractor ex(narrow(), rng);
  ex.set_tap_scales({0.5, 1.0, 2.0, 4.0});
  const Image a = random_image(64, 64, 1);
  const Image b = random_image(64, 64, 2);
  const auto same = fp_loss(ex, a, a);
  CHECK(same.first == 0.0);
  CHECK(same.second == 0.0);

  const auto ab = fp_loss(ex, a, b);
  const auto ba = fp_loss(ex, b, a);
  CHECK(ab.first == doctest::Approx(ba.first).epsilon(1e-12));
  CHECK(ab.second == doctest::Approx(ba.second).epsilon(1e-12));
  CHECK(ab.first > 0.0);
  CHECK(ab.second > 0.0);

  const auto fa = ex.extract_features(a);
  const auto fb = ex.extract_features(b);
  double perceptual = 0.0;
  double style = 0.0;
  for (std::size_t t = 0; t < fa.size(); ++t) {
    const Shape s = fa[t].shape();
    double sq = 0.0;
    for (int c = 0; c < s.c; ++c) {
      for (int i = 0; i < s.h; ++i) {
        for (int j = 0; j < s.w; ++j) {
          const double d = fa[t].at(0, c, i, j) - fb[t].at(0, c, i, j);
          sq += d * d;
        }
      }
    }
    perceptual += sq / (s.h * s.w) / fa.size();
    const auto ga = naive_gram(fa[t], 0);
    const auto gb = naive_gram(fb[t], 0);
    double gs = 0.0;
    for (std::size_t k = 0; k < ga.size(); ++k) gs += (ga[k] - gb[k]) * (ga[k] - gb[k]);
    style += gs / ga.size() / fa.size();
  }
  CHECK(std::abs(ab.first - perceptual) < 1e-6);
  CHECK(std::abs(ab.second - style) < 1e-6);

  try {
    fp_loss(ex, a, random_image(32, 64, 3));
    FAIL("shape mismatch accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeError);
  }
}

TEST_CASE("tap calibration gives unit RMS on the calibration set") {
  Rng rng(3);
  FeatureExtractor ex(narrow(), rng);
  const std::vector<Image> images{random_image(64, 64, 1), random_image(64, 64, 2)};
  ex.calibrate_taps(images, 64);
  for (std::size_t t = 0; t < 4; ++t) {
    double mean_rms = 0.0;
    for (const Image& img : images) {
      const Tensor f = ex.extract_features(img)[t];
      double sq = 0.0;
      for (double v : f.data()) sq += v * v;
      mean_rms += std::sqrt(sq / f.size()) / images.size();
    }
    CHECK(mean_rms == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("quality manifest round trip") {
  TempDir dir("perceptual");
  save_image(Image(4, 4), dir / "a.png");
  save_image(Image(4, 4), dir / "b.png");
  const std::vector<QualitySample> in{{dir / "a.png", Quality::Reject}, {dir / "b.png", Quality::Usable}};
  write_quality_manifest(dir / "quality.tsv", in);
  const auto out = read_quality_manifest(dir / "quality.tsv");
  REQUIRE(out.size() == 2u);
  CHECK(fs::equivalent(out[0].path, in[0].path));
  CHECK(out[0].label == Quality::Reject);
  CHECK(out[1].label == Quality::Usable);
  CHECK(parse_quality("good") == Quality::Good);
  CHECK(quality_name(Quality::Usable) == "usable");
}

TEST_CASE("quality training errors") {
  Rng rng(0);
  const QualityTrainConfig train;
  try {
    train_quality_backbone({}, narrow(), train, rng);
    FAIL("empty list accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyCorpus);
  }
  TempDir dir("perceptual");
  save_image(Image(8, 8), dir / "a.png");
  try {
    train_quality_backbone({{dir / "a.png", Quality::Good}, {dir / "a.png", Quality::Good}}, narrow(), train, rng);
    FAIL("single class accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateLabels);
  }
}

TEST_CASE("quality training beats chance on held-out toy images and freezes") {
  TempDir dir("perceptual");
  const ToyCorpus train_set = make_toy_corpus(15, 1, dir / "train", 64);
  const ToyCorpus test_set = make_toy_corpus(10, 2, dir / "test", 64);
  REQUIRE(train_set.samples.size() == 60u);
  ExtractorConfig cfg;
  cfg.widths = {8, 16, 32, 64};
  QualityTrainConfig train;
  train.lr = 2e-3;
  Rng rng(5);
  FeatureExtractor ex = train_quality_backbone(train_set.samples, cfg, train, rng);
  CHECK(ex.frozen());
  CHECK(quality_accuracy(ex, test_set.samples, 64) > 1.0 / 3.0);
  for (const auto& p : ex.params().items()) CHECK_FALSE(p.var->requires_grad);
}
