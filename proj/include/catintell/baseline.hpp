#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "catintell/dataset.hpp"
#include "catintell/imaging.hpp"
#include "catintell/perceptual.hpp"

namespace catintell {

struct HazeParams {
  double t = 1.0;
  double sigma = 0.0;
  std::array<double, 3> light{1.0, 1.0, 1.0};

  void validate() const;
  // t >= 0.75 good, t >= 0.5 usable, otherwise reject.
  Quality severity() const;
};

// Separable Gaussian with radius ceil(3 sigma) and mirror padding.
Image gaussian_blur(const Image& img, double sigma);
// t * blur(img) + (1 - t) * A, clamped to [0, 1].
Image degrade_traditional(const Image& img, const HazeParams& p);

// Procedural fundus-like picture: dark surround, orange field, bright
// optic disc, darker macula and branching vessels.
Image render_toy_fundus(int side, Rng& rng);

// Transmission and blur of the three severity tiers, mildest first.
std::array<HazeParams, 3> toy_tiers();

struct ToyCorpus {
  Corpus corpus;
  std::vector<QualitySample> samples;
  std::filesystem::path quality_manifest;
};

// Writes out_dir/hq (n images), out_dir/cataract (3 tiers each) and
// out_dir/quality.tsv. With holdout > 0 also writes out_dir/holdout/hq and
// out_dir/holdout/degraded from fresh renders that never enter the corpus.
ToyCorpus make_toy_corpus(int n, std::uint64_t seed, const std::filesystem::path& out_dir, int side = 128,
                          int holdout = 0);

}  // namespace catintell
