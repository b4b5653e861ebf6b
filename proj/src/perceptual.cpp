#include "catintell/perceptual.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "catintell/error.hpp"

namespace catintell {

namespace fs = std::filesystem;

std::string quality_name(Quality q) {
  switch (q) {
    case Quality::Good:
      return "good";
    case Quality::Usable:
      return "usable";
    case Quality::Reject:
      return "reject";
  }
  return "unknown";
}

Quality parse_quality(const std::string& text) {
  if (text == "good" || text == "0") return Quality::Good;
  if (text == "usable" || text == "1") return Quality::Usable;
  if (text == "reject" || text == "2") return Quality::Reject;
  fail(ErrorKind::DecodeError, "unknown quality label '" + text + "'");
}

void write_quality_manifest(const fs::path& manifest, const std::vector<QualitySample>& samples) {
  const fs::path base = fs::absolute(manifest).parent_path().lexically_normal();
  std::ofstream out(manifest, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot write " + manifest.string());
  for (const auto& s : samples) {
    const fs::path abs = fs::absolute(s.path).lexically_normal();
    const fs::path rel = abs.lexically_relative(base);
    const bool inside = !rel.empty() && *rel.begin() != "..";
    out << (inside ? rel.generic_string() : abs.generic_string()) << '\t' << quality_name(s.label) << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "cannot write " + manifest.string());
}

std::vector<QualitySample> read_quality_manifest(const fs::path& manifest) {
  std::ifstream in(manifest, std::ios::binary);
  if (!in) fail(ErrorKind::NotFound, "no such manifest: " + manifest.string());
  const fs::path base = fs::absolute(manifest).parent_path();
  std::vector<QualitySample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) fail(ErrorKind::DecodeError, manifest.string() + ": missing tab");
    QualitySample s;
    s.path = line.substr(0, tab);
    if (s.path.is_relative()) s.path = base / s.path;
    s.label = parse_quality(line.substr(tab + 1));
    out.push_back(std::move(s));
  }
  return out;
}

void ExtractorConfig::validate() const {
  if (widths.size() != 4) fail(ErrorKind::ConfigError, "extractor needs exactly four block widths");
  for (int w : widths) {
    if (w < 1) fail(ErrorKind::ConfigError, "extractor widths must be positive");
  }
}

FeatureExtractor::FeatureExtractor(const ExtractorConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  stem_ = make_conv(params_, "stem", 3, cfg_.widths[0], 3, 2, 1, 1, cfg_.bias, rng);
  int in = cfg_.widths[0];
  for (std::size_t i = 0; i < cfg_.widths.size(); ++i) {
    const std::string name = "block" + std::to_string(i);
    const int w = cfg_.widths[i];
    blocks_.push_back({make_conv(params_, name + ".conv", in, w, 3, 1, 1, 1, cfg_.bias, rng),
                       make_conv(params_, name + ".down", w, w, 3, 2, 1, 1, cfg_.bias, rng)});
    in = w;
  }
  classifier_ = make_conv(params_, "classifier", in, kQualityClasses, 1, 1, 0, 1, true, rng);
  tap_scale_.assign(cfg_.widths.size(), 1.0);
}

std::vector<Var> FeatureExtractor::raw_taps(const Var& x) const {
  if (x->shape().c != 3) fail(ErrorKind::ShapeError, "extractor expects 3 channels");
  std::vector<Var> out;
  Var h = ag::relu(stem_(x));
  for (const Block& b : blocks_) {
    h = ag::relu(b.conv(h));
    h = ag::relu(b.down(h));
    out.push_back(h);
  }
  return out;
}

std::vector<Var> FeatureExtractor::taps(const Var& x) const {
  std::vector<Var> out = raw_taps(x);
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (tap_scale_[t] != 1.0) out[t] = ag::scale(out[t], 1.0 / tap_scale_[t]);
  }
  return out;
}

Var FeatureExtractor::logits(const Var& x) const {
  return classifier_(ag::global_avg_pool(raw_taps(x).back()));
}

void FeatureExtractor::calibrate_taps(const std::vector<Image>& images, int side) {
  if (images.empty()) fail(ErrorKind::EmptyCorpus, "tap calibration needs images");
  NoGradGuard guard;
  std::vector<double> acc(cfg_.widths.size(), 0.0);
  for (const Image& img : images) {
    const Image small = (img.height == side && img.width == side) ? img : resize(img, side, side);
    const std::vector<Var> f = raw_taps(constant(to_tensor(small)));
    for (std::size_t t = 0; t < f.size(); ++t) {
      double sq = 0.0;
      for (double v : f[t]->value.data()) sq += v * v;
      acc[t] += std::sqrt(sq / static_cast<double>(f[t]->value.size()));
    }
  }
  std::vector<double> scales;
  for (double a : acc) scales.push_back(std::max(a / static_cast<double>(images.size()), 1e-8));
  set_tap_scales(std::move(scales));
}

void FeatureExtractor::set_tap_scales(std::vector<double> scales) {
  if (scales.size() != cfg_.widths.size()) fail(ErrorKind::ShapeError, "one tap scale per block expected");
  for (double s : scales) {
    if (!(s > 0.0) || !std::isfinite(s)) fail(ErrorKind::ConfigError, "tap scales must be positive");
  }
  tap_scale_ = std::move(scales);
}

std::vector<Tensor> FeatureExtractor::extract_features(const Tensor& x) const {
  NoGradGuard guard;
  std::vector<Tensor> out;
  for (const Var& v : taps(constant(x))) out.push_back(v->value);
  return out;
}

std::vector<Tensor> FeatureExtractor::extract_features(const Image& img) const {
  return extract_features(to_tensor(img));
}

std::vector<int> FeatureExtractor::classify(const Tensor& x) const {
  NoGradGuard guard;
  const Tensor z = logits(constant(x))->value;
  std::vector<int> out;
  for (int n = 0; n < z.shape().n; ++n) {
    int best = 0;
    for (int k = 1; k < kQualityClasses; ++k) {
      if (z.at(n, k, 0, 0) > z.at(n, best, 0, 0)) best = k;
    }
    out.push_back(best);
  }
  return out;
}

void FeatureExtractor::freeze() {
  params_.set_trainable(false);
  params_.zero_grad();
  frozen_ = true;
}

void FeatureExtractor::unfreeze() {
  params_.set_trainable(true);
  frozen_ = false;
}

namespace {

std::vector<Image> load_resized(const std::vector<QualitySample>& samples, int side) {
  std::vector<Image> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(resize(load_image(s.path), side, side));
  return out;
}

}  // namespace

FeatureExtractor train_quality_backbone(const std::vector<QualitySample>& samples, const ExtractorConfig& cfg,
                                        const QualityTrainConfig& train, Rng& rng) {
  if (samples.empty()) fail(ErrorKind::EmptyCorpus, "no quality samples");
  std::vector<int> seen(kQualityClasses, 0);
  for (const auto& s : samples) seen[static_cast<int>(s.label)] = 1;
  if (std::accumulate(seen.begin(), seen.end(), 0) < 2) {
    fail(ErrorKind::DegenerateLabels, "quality training needs at least two classes");
  }
  if (train.epochs < 0 || train.batch < 1 || train.side < 32) {
    fail(ErrorKind::ConfigError, "invalid quality training settings");
  }
  FeatureExtractor ex(cfg, rng);
  const std::vector<Image> images = load_resized(samples, train.side);
  Adam opt(ex.params());
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::bernoulli_distribution coin(0.5);
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(train.batch)) {
      const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(train.batch));
      std::vector<Image> batch;
      std::vector<int> labels;
      for (std::size_t i = at; i < end; ++i) {
        const bool h = coin(rng);
        const bool v = coin(rng);
        batch.push_back(flip(images[order[i]], h, v));
        labels.push_back(static_cast<int>(samples[order[i]].label));
      }
      ex.params().zero_grad();
      Var loss = ag::softmax_cross_entropy(ex.logits(constant(to_tensor(batch))), labels);
      if (!std::isfinite(loss->value.item())) fail(ErrorKind::NumericalError, "quality loss is not finite");
      backward(loss);
      clip_grad_norm(ex.params(), 1.0);
      opt.step(train.lr);
    }
  }
  ex.calibrate_taps(images, train.side);
  ex.freeze();
  return ex;
}

double quality_accuracy(const FeatureExtractor& ex, const std::vector<QualitySample>& samples, int side) {
  if (samples.empty()) return 0.0;
  const std::vector<Image> images = load_resized(samples, side);
  int correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (ex.classify(to_tensor(images[i]))[0] == static_cast<int>(samples[i].label)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

FpTerms fp_loss(const FeatureExtractor& ex, const Var& out, const Var& ref) {
  if (!(out->shape() == ref->shape())) {
    fail(ErrorKind::ShapeError, "fp_loss shapes differ: " + out->shape().str() + " vs " + ref->shape().str());
  }
  const std::vector<Var> fa = ex.taps(out);
  const std::vector<Var> fb = ex.taps(ref);
  const double per_tap = 1.0 / static_cast<double>(fa.size());
  std::vector<std::pair<double, Var>> perceptual;
  std::vector<std::pair<double, Var>> style;
  for (std::size_t t = 0; t < fa.size(); ++t) {
    const Shape s = fa[t]->shape();
    const double pixels = static_cast<double>(s.n) * s.h * s.w;
    perceptual.emplace_back(per_tap, ag::squared_error(fa[t], fb[t], 1.0 / pixels));
    const double entries = static_cast<double>(s.n) * s.c * s.c;
    style.emplace_back(per_tap, ag::squared_error(ag::gram(fa[t]), ag::gram(fb[t]), 1.0 / entries));
  }
  return {ag::weighted_sum(perceptual), ag::weighted_sum(style)};
}

std::pair<double, double> fp_loss(const FeatureExtractor& ex, const Image& out, const Image& ref) {
  NoGradGuard guard;
  FpTerms t = fp_loss(ex, constant(to_tensor(out)), constant(to_tensor(ref)));
  return {t.perceptual->value.item(), t.style->value.item()};
}

}  // namespace catintell
