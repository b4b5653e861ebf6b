#include "catintell/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "catintell/error.hpp"

namespace catintell {

std::vector<fs::path> list_images(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) fail(ErrorKind::NotFound, "no such directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_raster_path(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Corpus scan_corpus(const fs::path& root, const std::string& hq_subdir, const std::string& cataract_subdir) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) fail(ErrorKind::NotFound, "no such corpus root: " + root.string());
  Corpus c;
  c.root = root;
  c.hq_paths = list_images(root / hq_subdir);
  c.cataract_paths = list_images(root / cataract_subdir);
  if (c.hq_paths.empty()) fail(ErrorKind::EmptyCorpus, "no images in " + (root / hq_subdir).string());
  if (c.cataract_paths.empty()) {
    fail(ErrorKind::EmptyCorpus, "no images in " + (root / cataract_subdir).string());
  }
  return c;
}

std::vector<std::size_t> fold_sizes(std::size_t n) {
  if (n < static_cast<std::size_t>(kFolds)) {
    fail(ErrorKind::TooFewImages, "need at least 10 images per class, got " + std::to_string(n));
  }
  const auto rounded = static_cast<std::size_t>(std::lround(static_cast<double>(n) / kFolds));
  const std::size_t block = std::min(rounded, (n - 1) / (kFolds - 1));
  std::vector<std::size_t> sizes(kFolds, block);
  sizes.back() = n - block * (kFolds - 1);
  return sizes;
}

std::vector<std::vector<std::size_t>> fold_partition(std::size_t n, std::uint64_t seed) {
  const auto sizes = fold_sizes(n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> folds;
  std::size_t at = 0;
  for (std::size_t s : sizes) {
    folds.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                       order.begin() + static_cast<std::ptrdiff_t>(at + s));
    std::sort(folds.back().begin(), folds.back().end());
    at += s;
  }
  return folds;
}

namespace {

void split_class(const std::vector<fs::path>& paths, const std::vector<std::size_t>& val,
                 std::vector<fs::path>& train_out, std::vector<fs::path>& val_out) {
  std::set<std::size_t> held(val.begin(), val.end());
  for (std::size_t i = 0; i < paths.size(); ++i) (held.count(i) ? val_out : train_out).push_back(paths[i]);
}

}  // namespace

std::vector<FoldSplit> make_folds(const Corpus& corpus, std::uint64_t seed) {
  if (corpus.hq_paths.size() < static_cast<std::size_t>(kFolds) ||
      corpus.cataract_paths.size() < static_cast<std::size_t>(kFolds)) {
    fail(ErrorKind::TooFewImages, "10-fold split needs at least 10 images per class");
  }
  const auto hq = fold_partition(corpus.hq_paths.size(), seed);
  const auto cat = fold_partition(corpus.cataract_paths.size(), seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<FoldSplit> out(kFolds);
  for (int k = 0; k < kFolds; ++k) {
    out[k].fold_index = k;
    split_class(corpus.hq_paths, hq[k], out[k].train_hq, out[k].val_hq);
    split_class(corpus.cataract_paths, cat[k], out[k].train_cat, out[k].val_cat);
  }
  return out;
}

FoldSplit whole_corpus_split(const Corpus& corpus) {
  FoldSplit s;
  s.fold_index = -1;
  s.train_hq = corpus.hq_paths;
  s.train_cat = corpus.cataract_paths;
  return s;
}

ImageCache::ImageCache(int side, std::size_t max_bytes) : side_(side), max_bytes_(max_bytes) {
  if (side < 1) fail(ErrorKind::ConfigError, "resize side must be positive");
}

Image ImageCache::get(const fs::path& path) {
  const std::string key = path.string();
  if (auto it = images_.find(key); it != images_.end()) return it->second;
  Image img = resize(load_image(path), side_, side_);
  const std::size_t cost = img.pixels.size() * sizeof(double);
  if (bytes_ + cost <= max_bytes_) {
    bytes_ += cost;
    images_.emplace(key, img);
  }
  return img;
}

Image augment_patch(const Image& img, int patch, Rng& rng) {
  if (patch < 1 || patch > std::min(img.height, img.width)) {
    fail(ErrorKind::RangeError, "patch " + std::to_string(patch) + " does not fit image");
  }
  std::uniform_int_distribution<int> dy(0, img.height - patch);
  std::uniform_int_distribution<int> dx(0, img.width - patch);
  CropSpec spec{dy(rng), dx(rng), patch};
  std::bernoulli_distribution coin(0.5);
  const bool h = coin(rng);
  const bool v = coin(rng);
  return flip(crop(img, spec), h, v);
}

ImageBatch sample_unpaired_batch(const FoldSplit& split, int batch, int patch, Rng& rng, ImageCache& cache) {
  if (batch < 1) fail(ErrorKind::RangeError, "batch must be positive");
  if (split.train_hq.empty() || split.train_cat.empty()) fail(ErrorKind::EmptyCorpus, "empty training split");
  std::uniform_int_distribution<std::size_t> pick_hq(0, split.train_hq.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_cat(0, split.train_cat.size() - 1);
  std::vector<Image> hq;
  std::vector<Image> cat;
  for (int i = 0; i < batch; ++i) {
    hq.push_back(augment_patch(cache.get(split.train_hq[pick_hq(rng)]), patch, rng));
    cat.push_back(augment_patch(cache.get(split.train_cat[pick_cat(rng)]), patch, rng));
  }
  return {to_tensor(hq), to_tensor(cat)};
}

ImageBatch sample_paired_batch(const std::vector<PairRecord>& pairs, int batch, int patch, Rng& rng,
                               ImageCache& cache) {
  if (batch < 1) fail(ErrorKind::RangeError, "batch must be positive");
  if (pairs.empty()) fail(ErrorKind::EmptyCorpus, "no training pairs");
  std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
  std::bernoulli_distribution coin(0.5);
  std::vector<Image> syn;
  std::vector<Image> hq;
  for (int i = 0; i < batch; ++i) {
    const PairRecord& rec = pairs[pick(rng)];
    CropPair c = paired_random_crop(cache.get(rec.syn_path), cache.get(rec.hq_path), patch, rng);
    const bool h = coin(rng);
    const bool v = coin(rng);
    syn.push_back(flip(c.a, h, v));
    hq.push_back(flip(c.b, h, v));
  }
  return {to_tensor(syn), to_tensor(hq)};
}

namespace {

std::string manifest_entry(const fs::path& p, const fs::path& base) {
  const fs::path abs = fs::absolute(p).lexically_normal();
  const fs::path rel = abs.lexically_relative(base);
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return abs.generic_string();
}

}  // namespace

void write_pairs(const fs::path& manifest, const std::vector<PairRecord>& records) {
  const fs::path base = fs::absolute(manifest).parent_path().lexically_normal();
  std::ostringstream body;
  for (const auto& r : records) {
    body << manifest_entry(r.hq_path, base) << '\t' << manifest_entry(r.syn_path, base) << '\n';
  }
  const fs::path tmp = manifest.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::IoError, "cannot write " + manifest.string());
    out << body.str();
    if (!out) fail(ErrorKind::IoError, "cannot write " + manifest.string());
  }
  fs::rename(tmp, manifest);
}

std::vector<PairRecord> read_pairs(const fs::path& manifest) {
  std::ifstream in(manifest, std::ios::binary);
  if (!in) fail(ErrorKind::NotFound, "no such manifest: " + manifest.string());
  const fs::path base = fs::absolute(manifest).parent_path();
  std::vector<PairRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      fail(ErrorKind::DecodeError, manifest.string() + ":" + std::to_string(lineno) + ": missing tab");
    }
    PairRecord r;
    r.hq_path = fs::path(line.substr(0, tab));
    r.syn_path = fs::path(line.substr(tab + 1));
    if (r.hq_path.is_relative()) r.hq_path = base / r.hq_path;
    if (r.syn_path.is_relative()) r.syn_path = base / r.syn_path;
    for (const auto* p : {&r.hq_path, &r.syn_path}) {
      std::error_code ec;
      if (!fs::is_regular_file(*p, ec)) fail(ErrorKind::NotFound, "manifest references missing " + p->string());
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace catintell
