#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "catintell/imaging.hpp"
#include "catintell/nn.hpp"

namespace catintell {

namespace fs = std::filesystem;

struct Corpus {
  fs::path root;
  std::vector<fs::path> hq_paths;
  std::vector<fs::path> cataract_paths;
};

struct FoldSplit {
  int fold_index = 0;
  std::vector<fs::path> train_hq;
  std::vector<fs::path> val_hq;
  std::vector<fs::path> train_cat;
  std::vector<fs::path> val_cat;
};

struct PairRecord {
  fs::path hq_path;
  fs::path syn_path;
  bool operator==(const PairRecord&) const = default;
};

constexpr int kFolds = 10;

// Sorted PNG/JPEG files directly inside `dir`.
std::vector<fs::path> list_images(const fs::path& dir);
Corpus scan_corpus(const fs::path& root, const std::string& hq_subdir = "hq",
                   const std::string& cataract_subdir = "cataract");

// Validation block sizes for a class of n items: folds 0-8 share one size,
// fold 9 absorbs the remainder.
std::vector<std::size_t> fold_sizes(std::size_t n);
// Validation index sets of a seeded permutation of 0..n-1.
std::vector<std::vector<std::size_t>> fold_partition(std::size_t n, std::uint64_t seed);
std::vector<FoldSplit> make_folds(const Corpus& corpus, std::uint64_t seed);
// All images in training, none held out; used when no fold is selected.
FoldSplit whole_corpus_split(const Corpus& corpus);

// Resized images keyed by path, kept in memory up to a byte budget.
class ImageCache {
 public:
  explicit ImageCache(int side, std::size_t max_bytes = std::size_t{1} << 31);
  Image get(const fs::path& path);
  int side() const { return side_; }

 private:
  int side_;
  std::size_t max_bytes_;
  std::size_t bytes_ = 0;
  std::map<std::string, Image> images_;
};

struct ImageBatch {
  Tensor first;
  Tensor second;
};

// Random crop of `patch` px plus an independent coin flip per axis.
Image augment_patch(const Image& img, int patch, Rng& rng);

// (hq, cataract) stacks drawn independently, uniformly with replacement.
ImageBatch sample_unpaired_batch(const FoldSplit& split, int batch, int patch, Rng& rng, ImageCache& cache);
// (syn, hq) stacks cropped and flipped identically within each pair.
ImageBatch sample_paired_batch(const std::vector<PairRecord>& pairs, int batch, int patch, Rng& rng,
                               ImageCache& cache);

void write_pairs(const fs::path& manifest, const std::vector<PairRecord>& records);
// Relative entries resolve against the manifest's directory; every file must exist.
std::vector<PairRecord> read_pairs(const fs::path& manifest);

}  // namespace catintell
