#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "catintell/baseline.hpp"
#include "catintell/error.hpp"
#include "catintell/trainer.hpp"
#include "doctest.h"
#include "test_util.hpp"
#include "tiny_configs.hpp"

using namespace catintell;
using catintell::testing::random_tensor;
using catintell::testing::same_values;
using catintell::testing::TempDir;
using catintell::testing::tiny_extractor;
using catintell::testing::tiny_phase;
using catintell::testing::tiny_run;

namespace {

std::shared_ptr<const FeatureExtractor> frozen_extractor() {
  Rng rng(1);
  auto ex = std::make_shared<FeatureExtractor>(tiny_extractor(), rng);
  ex->freeze();
  return ex;
}

GanBatch paired_batch(std::uint64_t seed) {
  const Tensor hq = random_tensor(Shape{2, 3, 16, 16}, seed, 0.0, 1.0);
  Tensor syn = hq;
  for (double& v : syn.data()) v = 0.6 * v + 0.3;
  return res_batch({syn, hq});
}

std::vector<Tensor> values(const ParamStore& p) { return p.snapshot(); }

bool same_store(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!same_values(a[i], b[i])) return false;
  }
  return true;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  // One iteration with no warmup: the only update lands on the cosine end, lr 0.
  PhaseConfig cfg = tiny_phase("res", 1, 16);
  cfg.train.warmup_iters = 0;
  GanTrainer t(Phase::Res, cfg, frozen_extractor(), 5);
  const auto g0 = values(t.generator().params());
  const auto d0 = values(t.discriminator().params());
  const StepReport r = t.step(paired_batch(1));
  CHECK(r.lr == 0.0);
  CHECK(same_store(values(t.generator().params()), g0));
  CHECK(same_store(values(t.discriminator().params()), d0));
  CHECK(t.steps() == 1);
}

TEST_CASE("a NaN batch raises NumericalError and leaves the state untouched") {
  GanTrainer t(Phase::Res, tiny_phase("res", 50, 16), frozen_extractor(), 5);
  t.step(paired_batch(1));
  const auto g0 = values(t.generator().params());
  const auto d0 = values(t.discriminator().params());
  const Checkpoint before = t.to_checkpoint();
  GanBatch bad = paired_batch(2);
  bad.pixel_target.data()[3] = std::numeric_limits<double>::quiet_NaN();
  try {
    t.step(bad);
    FAIL("NaN accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NumericalError);
  }
  CHECK(same_store(values(t.generator().params()), g0));
  CHECK(same_store(values(t.discriminator().params()), d0));
  CHECK(t.steps() == 1);
  CHECK(serialize_checkpoint(t.to_checkpoint()) == serialize_checkpoint(before));
  CHECK_NOTHROW(t.step(paired_batch(3)));
}

TEST_CASE("total loss falls over 200 paired steps (median of three seeds)") {
  std::vector<double> first;
  std::vector<double> last;
  const std::vector<GanBatch> data{paired_batch(11), paired_batch(12)};
  for (std::uint64_t seed : {1, 2, 3}) {
    GanTrainer t(Phase::Res, tiny_phase("res", 200, 16), frozen_extractor(), seed);
    for (int k = 0; k < 200; ++k) {
      const StepReport r = t.step(data[k % 2]);
      if (k == 0) first.push_back(r.loss.total);
      if (k == 199) last.push_back(r.loss.total);
    }
  }
  std::sort(first.begin(), first.end());
  std::sort(last.begin(), last.end());
  CHECK(last[1] < first[1]);
}

TEST_CASE("checkpoints restore the exact trajectory") {
  const std::vector<GanBatch> data{paired_batch(21), paired_batch(22), paired_batch(23)};
  GanTrainer a(Phase::Res, tiny_phase("res", 30, 16), frozen_extractor(), 9);
  for (int k = 0; k < 10; ++k) a.step(data[k % 3]);
  const Checkpoint mid = parse_checkpoint(serialize_checkpoint(a.to_checkpoint()));
  for (int k = 10; k < 20; ++k) a.step(data[k % 3]);

  GanTrainer b(Phase::Res, tiny_phase("res", 30, 16), frozen_extractor(), 1234);
  b.load_state(mid);
  CHECK(b.steps() == 10);
  CHECK(rng_state(b.data_rng()) == mid.rng_state);
  for (int k = 10; k < 20; ++k) b.step(data[k % 3]);
  CHECK(serialize_checkpoint(a.to_checkpoint()) == serialize_checkpoint(b.to_checkpoint()));
}

TEST_CASE("fine-tuning switches to the linear fine-tune schedule") {
  GanTrainer t(Phase::Res, tiny_phase("res", 30, 16), frozen_extractor(), 9);
  t.step(paired_batch(1));
  t.begin_finetune();
  CHECK(t.phase() == Phase::ResFinetune);
  CHECK(t.steps() == 0);
  CHECK(t.schedule().decay == Decay::Linear);
  CHECK(t.schedule().base == 1e-4);
  CHECK(t.schedule().horizon == 20);
  CHECK(t.step(paired_batch(2)).lr == doctest::Approx(1e-4 * 19.0 / 20.0).epsilon(1e-12));
}

TEST_CASE("unpaired syn training: files, resume, frozen extractor and generated pairs") {
  TempDir dir("trainer");
  const ToyCorpus toy = make_toy_corpus(20, 4, dir / "toy", 32);
  RunConfig rc = tiny_run(60, 32, 16);
  const auto ex = frozen_extractor();
  const auto ex_before = values(ex->params());

  TrainJob full;
  full.config = rc;
  full.run_dir = dir / "full";
  full.extractor = ex;
  const Checkpoint done = train_syn(toy.corpus, full);
  CHECK(done.phase == "syn");
  CHECK(done.step == 60);
  CHECK(fs::exists(dir / "full" / "syn.ckpt"));
  CHECK(fs::exists(dir / "full" / "checkpoints" / "step_0000050.ckpt"));
  CHECK(fs::exists(dir / "full" / "validation.csv"));
  std::ifstream log(dir / "full" / "train_log.csv");
  std::string header;
  std::getline(log, header);
  CHECK(header == "step,lr,pixel,fp,fp_style,identity,gan,total,d_loss");
  CHECK(same_store(values(ex->params()), ex_before));

  TrainJob head = full;
  head.run_dir = dir / "split";
  head.stop_at = 30;
  const Checkpoint half = train_syn(toy.corpus, head);
  CHECK(half.step == 30);
  TrainJob tail = full;
  tail.run_dir = dir / "split";
  tail.resume = dir / "split" / "syn.ckpt";
  const Checkpoint resumed = train_syn(toy.corpus, tail);
  CHECK(serialize_checkpoint(resumed) == serialize_checkpoint(done));
  CHECK(slurp(dir / "split" / "train_log.csv") == slurp(dir / "full" / "train_log.csv"));

  const auto hq = list_images(dir / "toy" / "hq");
  const std::vector<fs::path> ten(hq.begin(), hq.begin() + 10);
  const fs::path m1 = generate_pairs(done, ten, dir / "pairs1", 32);
  const fs::path m2 = generate_pairs(done, ten, dir / "pairs2", 32);
  const auto pairs = read_pairs(m1);
  REQUIRE(pairs.size() == 10u);
  double diff = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Image a = load_image(pairs[i].hq_path);
    const Image b = load_image(pairs[i].syn_path);
    CHECK(a.height == b.height);
    CHECK(a.width == b.width);
    for (std::size_t k = 0; k < a.pixels.size(); ++k) diff += std::abs(a.pixels[k] - b.pixels[k]);
    CHECK(slurp(pairs[i].syn_path) == slurp(dir / "pairs2" / "syn" / pairs[i].syn_path.filename()));
  }
  CHECK(diff > 0.0);
  (void)m2;

  try {
    finetune_res(done, pairs, full);
    FAIL("fine-tuned a syn checkpoint");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::PhaseError);
  }

  Corpus empty = toy.corpus;
  empty.cataract_paths.clear();
  try {
    train_syn(empty, full);
    FAIL("empty corpus accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyCorpus);
  }
}

TEST_CASE("paired res training, fine-tuning and restore") {
  TempDir dir("trainer");
  fs::create_directories(dir / "hq");
  fs::create_directories(dir / "syn");
  std::vector<PairRecord> pairs;
  Rng rng(2);
  for (int i = 0; i < 4; ++i) {
    const Image hq = render_toy_fundus(32, rng);
    const std::string name = "p" + std::to_string(i) + ".png";
    save_image(hq, dir / "hq" / name);
    save_image(degrade_traditional(hq, toy_tiers()[1]), dir / "syn" / name);
    pairs.push_back({dir / "hq" / name, dir / "syn" / name});
  }
  TrainJob job;
  job.config = tiny_run(40, 32, 16);
  job.run_dir = dir / "res";
  job.extractor = frozen_extractor();
  const Checkpoint res = train_res(pairs, job);
  CHECK(res.phase == "res");
  CHECK(res.step == 40);

  TrainJob ft = job;
  ft.run_dir = dir / "ft";
  ft.extractor = nullptr;
  const Checkpoint tuned = finetune_res(res, pairs, ft);
  CHECK(tuned.phase == "res-finetune");
  CHECK(tuned.step == 20);
  CHECK(fs::exists(dir / "ft" / "res-finetune.ckpt"));

  fs::create_directories(dir / "in");
  save_image(Image(23, 37, 0.5), dir / "in" / "odd.png");
  save_image(Image(32, 32, 0.2), dir / "in" / "square.jpg");
  const auto written = restore_directory(tuned, dir / "in", dir / "out");
  CHECK(written.size() == 2u);
  const Image odd = load_image(dir / "out" / "odd.png");
  CHECK(odd.height == 23);
  CHECK(odd.width == 37);
  CHECK(fs::exists(dir / "out" / "square.jpg"));

  try {
    generate_pairs(res, {pairs[0].hq_path}, dir / "bad", 32);
    FAIL("generated pairs from a res checkpoint");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::PhaseError);
  }
}
