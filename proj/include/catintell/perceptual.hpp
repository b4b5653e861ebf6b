#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "catintell/autograd.hpp"
#include "catintell/imaging.hpp"
#include "catintell/layers.hpp"
#include "catintell/nn.hpp"

namespace catintell {

enum class Quality { Good = 0, Usable = 1, Reject = 2 };
constexpr int kQualityClasses = 3;

std::string quality_name(Quality q);
Quality parse_quality(const std::string& text);

struct QualitySample {
  std::filesystem::path path;
  Quality label = Quality::Good;
};

// quality.tsv: "path<TAB>label" per line, paths relative to the manifest directory.
void write_quality_manifest(const std::filesystem::path& manifest, const std::vector<QualitySample>& samples);
std::vector<QualitySample> read_quality_manifest(const std::filesystem::path& manifest);

struct ExtractorConfig {
  // Channel width of each of the four downsampling blocks; the stem uses widths[0].
  std::vector<int> widths{32, 64, 128, 256};
  bool bias = true;

  void validate() const;
};

// VGG-style classifier: a stride-2 stem then blocks of [3x3 conv, 3x3
// stride-2 conv], each followed by ReLU. Taps sit after each block, at
// strides 4, 8, 16 and 32.
class FeatureExtractor {
 public:
  FeatureExtractor(const ExtractorConfig& cfg, Rng& rng);

  const ExtractorConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Tap features divided by their calibrated RMS.
  std::vector<Var> taps(const Var& x) const;
  Var logits(const Var& x) const;
  std::vector<Tensor> extract_features(const Tensor& x) const;
  std::vector<Tensor> extract_features(const Image& img) const;
  std::vector<int> classify(const Tensor& x) const;

  // Sets each tap scale to its mean RMS over `images` (resized to `side`).
  void calibrate_taps(const std::vector<Image>& images, int side);
  const std::vector<double>& tap_scales() const { return tap_scale_; }
  void set_tap_scales(std::vector<double> scales);

  void freeze();
  void unfreeze();
  bool frozen() const { return frozen_; }

 private:
  struct Block {
    Conv conv;
    Conv down;
  };

  std::vector<Var> raw_taps(const Var& x) const;

  ExtractorConfig cfg_;
  ParamStore params_;
  std::vector<double> tap_scale_;
  Conv stem_;
  std::vector<Block> blocks_;
  Conv classifier_;
  bool frozen_ = false;
};

struct QualityTrainConfig {
  int epochs = 5;
  int batch = 8;
  double lr = 1e-3;
  int side = 64;
};

// Cross-entropy training on quality labels; the returned extractor is frozen.
FeatureExtractor train_quality_backbone(const std::vector<QualitySample>& samples, const ExtractorConfig& cfg,
                                        const QualityTrainConfig& train, Rng& rng);
double quality_accuracy(const FeatureExtractor& ex, const std::vector<QualitySample>& samples, int side);

struct FpTerms {
  Var perceptual;
  Var style;
};

// perceptual: mean over taps of sum((phi(a) - phi(b))^2) / (N H W);
// style: mean over taps of mean((Gram(phi(a)) - Gram(phi(b)))^2).
FpTerms fp_loss(const FeatureExtractor& ex, const Var& out, const Var& ref);
std::pair<double, double> fp_loss(const FeatureExtractor& ex, const Image& out, const Image& ref);

}  // namespace catintell
