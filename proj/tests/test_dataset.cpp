#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "catintell/dataset.hpp"
#include "catintell/error.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace catintell;
using catintell::testing::same_values;
using catintell::testing::TempDir;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::UsageError;
}

void write_images(const fs::path& dir, const std::string& stem, int count, int side) {
  fs::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    Image img(side, side, 0.1 + 0.05 * i);
    save_image(img, dir / (stem + std::to_string(i) + ".png"));
  }
}

void check_partition(std::size_t n, std::uint64_t seed) {
  const auto blocks = fold_partition(n, seed);
  REQUIRE(blocks.size() == static_cast<std::size_t>(kFolds));
  std::vector<int> seen(n, 0);
  for (const auto& b : blocks) {
    CHECK_FALSE(b.empty());
    for (std::size_t i : b) {
      REQUIRE(i < n);
      ++seen[i];
    }
  }
  for (int s : seen) CHECK(s == 1);
}

}  // namespace

TEST_CASE("fold sizes for the published corpus") {
  const auto cat = fold_sizes(2436);
  const auto hq = fold_sizes(1144);
  for (int f = 0; f < 9; ++f) {
    CHECK(cat[f] == 244);
    CHECK(hq[f] == 114);
  }
  CHECK(cat[9] == 240);
  CHECK(hq[9] == 118);
}

TEST_CASE("fold sizes for small and awkward corpora") {
  for (std::size_t n : {10u, 11u, 19u, 20u, 99u, 101u, 1000u, 1005u}) {
    const auto s = fold_sizes(n);
    CHECK(s.size() == 10u);
    CHECK(std::accumulate(s.begin(), s.end(), std::size_t{0}) == n);
    for (std::size_t v : s) CHECK(v >= 1);
  }
  for (std::size_t v : fold_sizes(10)) CHECK(v == 1);
  CHECK(kind_of([] { fold_sizes(9); }) == ErrorKind::TooFewImages);
}

TEST_CASE("fold partition is a partition for random sizes and seeds") {
  Rng rng(123);
  std::uniform_int_distribution<std::size_t> size(10, 3000);
  for (int trial = 0; trial < 50; ++trial) check_partition(size(rng), rng());
  CHECK(fold_partition(500, 7) == fold_partition(500, 7));
  CHECK(fold_partition(500, 7) != fold_partition(500, 8));
}

TEST_CASE("scan, folds and error contracts on disk") {
  TempDir dir("dataset");
  write_images(dir / "hq", "h", 12, 8);
  write_images(dir / "cataract", "c", 10, 8);
  std::ofstream(dir / "hq" / "readme.txt") << "skip me";

  const Corpus c = scan_corpus(dir.path());
  CHECK(c.hq_paths.size() == 12u);
  CHECK(c.cataract_paths.size() == 10u);
  CHECK(std::is_sorted(c.hq_paths.begin(), c.hq_paths.end()));
  CHECK(scan_corpus(dir.path()).hq_paths == c.hq_paths);

  const auto folds = make_folds(c, 3);
  REQUIRE(folds.size() == 10u);
  std::set<fs::path> val_cat;
  for (const auto& f : folds) {
    CHECK(f.val_cat.size() == 1u);
    CHECK(f.train_cat.size() == 9u);
    CHECK(f.val_hq.size() + f.train_hq.size() == 12u);
    for (const auto& p : f.val_hq) {
      CHECK(std::find(f.train_hq.begin(), f.train_hq.end(), p) == f.train_hq.end());
    }
    val_cat.insert(f.val_cat.begin(), f.val_cat.end());
  }
  CHECK(val_cat.size() == 10u);

  const FoldSplit all = whole_corpus_split(c);
  CHECK(all.train_hq.size() == 12u);
  CHECK(all.val_hq.empty());

  fs::create_directories(dir / "empty" / "hq");
  fs::create_directories(dir / "empty" / "cataract");
  write_images(dir / "empty" / "hq", "h", 3, 4);
  CHECK(kind_of([&] { scan_corpus(dir / "empty"); }) == ErrorKind::EmptyCorpus);
  CHECK(kind_of([&] { scan_corpus(dir / "absent"); }) == ErrorKind::NotFound);

  Corpus small = c;
  small.cataract_paths.resize(9);
  CHECK(kind_of([&] { make_folds(small, 1); }) == ErrorKind::TooFewImages);
}

TEST_CASE("unpaired batches have the requested shape and are reproducible") {
  TempDir dir("dataset");
  write_images(dir / "hq", "h", 3, 20);
  write_images(dir / "cataract", "c", 4, 20);
  const FoldSplit split = whole_corpus_split(scan_corpus(dir.path()));
  ImageCache cache(32);
  Rng r1(4);
  Rng r2(4);
  const ImageBatch a = sample_unpaired_batch(split, 5, 16, r1, cache);
  const ImageBatch b = sample_unpaired_batch(split, 5, 16, r2, cache);
  CHECK(a.first.shape() == Shape{5, 3, 16, 16});
  CHECK(a.second.shape() == Shape{5, 3, 16, 16});
  CHECK(same_values(a.first, b.first));
  CHECK(same_values(a.second, b.second));
}

TEST_CASE("paired batches crop both members identically") {
  TempDir dir("dataset");
  Image hq(24, 24);
  for (int y = 0; y < 24; ++y) {
    for (int x = 0; x < 24; ++x) {
      hq.at(y, x, 0) = y / 23.0;
      hq.at(y, x, 1) = x / 23.0;
    }
  }
  save_image(hq, dir / "hq.png");
  save_image(hq, dir / "syn.png");
  const std::vector<PairRecord> pairs{{dir / "hq.png", dir / "syn.png"}};
  ImageCache cache(24);
  Rng rng(8);
  for (int i = 0; i < 5; ++i) {
    const ImageBatch b = sample_paired_batch(pairs, 2, 10, rng, cache);
    CHECK(b.first.shape() == Shape{2, 3, 10, 10});
    CHECK(same_values(b.first, b.second));
  }
}

TEST_CASE("pair manifests round trip and validate") {
  TempDir dir("dataset");
  write_images(dir / "hq", "h", 5, 4);
  write_images(dir / "syn", "s", 5, 4);
  std::vector<PairRecord> records;
  for (int i = 0; i < 5; ++i) {
    records.push_back({dir / "hq" / ("h" + std::to_string(i) + ".png"), dir / "syn" / ("s" + std::to_string(i) + ".png")});
  }
  write_pairs(dir / "pairs.tsv", records);
  std::ifstream in(dir / "pairs.tsv");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 5);
  const auto back = read_pairs(dir / "pairs.tsv");
  REQUIRE(back.size() == 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(fs::equivalent(back[i].hq_path, records[i].hq_path));
    CHECK(fs::equivalent(back[i].syn_path, records[i].syn_path));
  }

  write_pairs(dir / "empty.tsv", {});
  CHECK(read_pairs(dir / "empty.tsv").empty());

  fs::remove(dir / "syn" / "s3.png");
  CHECK(kind_of([&] { read_pairs(dir / "pairs.tsv"); }) == ErrorKind::NotFound);
}

TEST_CASE("augmented patches stay in bounds") {
  const Image img(30, 30, 0.7);
  Rng rng(2);
  for (int i = 0; i < 10; ++i) {
    const Image p = augment_patch(img, 30, rng);
    CHECK(p.height == 30);
    for (double v : p.pixels) CHECK(v == 0.7);
  }
}
