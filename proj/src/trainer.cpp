#include "catintell/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "catintell/error.hpp"
#include "catintell/metrics.hpp"

namespace catintell {

namespace fs = std::filesystem;

std::string phase_name(Phase p) {
  switch (p) {
    case Phase::Syn:
      return "syn";
    case Phase::Res:
      return "res";
    case Phase::ResFinetune:
      return "res-finetune";
    case Phase::Quality:
      return "quality";
  }
  return "unknown";
}

Phase parse_phase(const std::string& text) {
  for (Phase p : {Phase::Syn, Phase::Res, Phase::ResFinetune, Phase::Quality}) {
    if (phase_name(p) == text) return p;
  }
  fail(ErrorKind::PhaseError, "unknown phase '" + text + "'");
}

GanBatch syn_batch(const ImageBatch& unpaired) {
  return {unpaired.first, unpaired.second, unpaired.first, unpaired.second, unpaired.second};
}

GanBatch res_batch(const ImageBatch& paired) {
  return {paired.first, paired.second, paired.second, paired.second, paired.second};
}

namespace {

std::uint64_t stream_base(Phase p) { return p == Phase::Syn ? 100 : 200; }

Tensor filled_like(const Var& v, double value) { return Tensor(v->shape(), value); }

void put_tap_scales(Checkpoint& c, const FeatureExtractor& ex) {
  const auto& s = ex.tap_scales();
  c.put("extractor_taps", Tensor(Shape{1, 1, 1, static_cast<int>(s.size())}, s));
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void check_finite(double v, const char* what, std::int64_t step) {
  if (!std::isfinite(v)) {
    fail(ErrorKind::NumericalError, std::string(what) + " is not finite at step " + std::to_string(step));
  }
}

struct OptimizerSnapshot {
  std::vector<Tensor> params;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t t = 0;
};

OptimizerSnapshot snapshot(const ParamStore& params, const Adam& opt) {
  return {params.snapshot(), opt.first_moments(), opt.second_moments(), opt.steps()};
}

void roll_back(ParamStore& params, Adam& opt, const OptimizerSnapshot& s) {
  params.restore(s.params);
  opt.first_moments() = s.m;
  opt.second_moments() = s.v;
  opt.set_steps(s.t);
}

}  // namespace

GanTrainer::GanTrainer(Phase phase, const PhaseConfig& cfg, std::shared_ptr<const FeatureExtractor> extractor,
                       std::uint64_t seed)
    : phase_(phase),
      cfg_(cfg),
      extractor_(std::move(extractor)),
      gen_([&] {
        Rng r = derive_rng(seed, stream_base(phase) + 1);
        return Generator(cfg.generator, r);
      }()),
      dis_([&] {
        Rng r = derive_rng(seed, stream_base(phase) + 2);
        return Discriminator(cfg.discriminator, r);
      }()),
      g_opt_(gen_.params(), cfg.train.adam),
      d_opt_(dis_.params(), cfg.train.adam),
      data_rng_(derive_rng(seed, stream_base(phase) + 3)),
      schedule_(cfg.train.main_schedule()) {
  if (phase != Phase::Syn && phase != Phase::Res) fail(ErrorKind::PhaseError, "trainers start in syn or res");
  if (!extractor_) fail(ErrorKind::ConfigError, "GAN training needs a perceptual extractor");
  cfg_.train.validate();
}

namespace {

Var d_terms(const Var& p_real, const Var& p_fake) {
  return ag::weighted_sum({{0.5, ag::bce(filled_like(p_real, 1.0), p_real, kBceEps)},
                           {0.5, ag::bce(filled_like(p_fake, 0.0), p_fake, kBceEps)}});
}

}  // namespace

GeneratorObjective generator_objective(const Generator& gen, const Discriminator& dis, const FeatureExtractor& ex,
                                       const GanBatch& b, const LossWeights& w, bool soft_target) {
  return generator_objective(gen, dis, ex, b, w, soft_target, gen.forward(constant(b.source)));
}

GeneratorObjective generator_objective(const Generator& gen, const Discriminator& dis, const FeatureExtractor& ex,
                                       const GanBatch& b, const LossWeights& w, bool soft_target, const Var& fake) {
  Tensor target = soft_target ? dis.forward(constant(b.real))->value : Tensor(Shape{b.source.shape().n, 1, 1, 1}, 1.0);
  Var gan = ag::bce(target, dis.forward(fake), kBceEps);
  Var pixel = ag::smooth_l1(fake, constant(b.pixel_target));
  FpTerms fp = fp_loss(ex, fake, constant(b.fp_target));
  Var probe = constant(b.identity);
  Var identity = ag::smooth_l1(gen.forward(probe), probe);

  GeneratorObjective obj;
  obj.parts = composite({pixel->value.item(), fp.perceptual->value.item(), fp.style->value.item(),
                         identity->value.item(), gan->value.item(), 0.0},
                        w);
  obj.total = ag::weighted_sum({{w.pixel, pixel},
                                {w.fp, fp.perceptual},
                                {w.fp * w.style, fp.style},
                                {w.identity, identity},
                                {w.gan, gan}});
  return obj;
}

Var discriminator_objective(const Discriminator& dis, const Var& real, const Var& fake) {
  return d_terms(dis.forward(real), dis.forward(fake));
}

StepReport GanTrainer::step(const GanBatch& b) {
  const std::int64_t k = step_ + 1;
  if (k > schedule_.horizon) fail(ErrorKind::RangeError, "schedule horizon already reached");
  const double lr = lr_at(schedule_, k);
  const double clip = cfg_.train.clip_norm;
  StepReport rep;
  rep.step = k;
  rep.lr = lr;

  gen_.params().zero_grad();
  dis_.params().zero_grad();
  dis_.params().set_trainable(true);

  Var fake = gen_.forward(constant(b.source));

  Var p_real = dis_.forward(constant(b.real));
  Var p_fake = dis_.forward(ag::detach(fake));
  Var d_loss = d_terms(p_real, p_fake);
  rep.d_loss = d_loss->value.item();
  check_finite(rep.d_loss, "discriminator loss", k);
  backward(d_loss);
  if (!grads_finite(dis_.params())) check_finite(NAN, "discriminator gradient", k);
  for (double p : p_real->value.data()) rep.p_real += p / static_cast<double>(p_real->value.size());
  for (double p : p_fake->value.data()) rep.p_fake += p / static_cast<double>(p_fake->value.size());

  const OptimizerSnapshot saved = snapshot(dis_.params(), d_opt_);
  clip_grad_norm(dis_.params(), clip);
  d_opt_.step(lr);

  dis_.params().set_trainable(false);
  dis_.params().zero_grad();
  try {
    GeneratorObjective obj = generator_objective(gen_, dis_, *extractor_, b, cfg_.losses, cfg_.train.soft_target, fake);
    rep.loss = obj.parts;
    Var total = obj.total;
    check_finite(total->value.item(), "generator loss", k);
    backward(total);
    if (!grads_finite(gen_.params())) check_finite(NAN, "generator gradient", k);
  } catch (...) {
    roll_back(dis_.params(), d_opt_, saved);
    dis_.params().set_trainable(true);
    gen_.params().zero_grad();
    throw;
  }
  clip_grad_norm(gen_.params(), clip);
  g_opt_.step(lr);
  dis_.params().set_trainable(true);
  gen_.params().zero_grad();
  dis_.params().zero_grad();
  step_ = k;
  return rep;
}

void GanTrainer::begin_finetune() {
  if (phase_ != Phase::Res) fail(ErrorKind::PhaseError, "fine-tuning starts from a res state");
  phase_ = Phase::ResFinetune;
  schedule_ = cfg_.train.finetune_schedule();
  step_ = 0;
}

namespace {

json schedule_json(const Schedule& s) {
  return {{"base", s.base}, {"warmup", s.warmup}, {"horizon", s.horizon}, {"decay", decay_name(s.decay)}};
}

Schedule schedule_from(const json& j) {
  return {j.at("base").get<double>(), j.at("warmup").get<std::int64_t>(), j.at("horizon").get<std::int64_t>(),
          parse_decay(j.at("decay").get<std::string>())};
}

void put_moments(Checkpoint& c, const std::string& prefix, const ParamStore& params, const Adam& opt) {
  for (std::size_t i = 0; i < params.items().size(); ++i) {
    c.put(prefix + "m." + params.items()[i].name, opt.first_moments()[i]);
    c.put(prefix + "v." + params.items()[i].name, opt.second_moments()[i]);
  }
}

void load_moments(const Checkpoint& c, const std::string& prefix, const ParamStore& params, Adam& opt) {
  for (std::size_t i = 0; i < params.items().size(); ++i) {
    const std::string& name = params.items()[i].name;
    const Tensor& m = c.array(prefix + "m." + name);
    const Tensor& v = c.array(prefix + "v." + name);
    if (!(m.shape() == opt.first_moments()[i].shape()) || !(v.shape() == opt.second_moments()[i].shape())) {
      fail(ErrorKind::ShapeError, "optimizer moment shape mismatch for " + name);
    }
    opt.first_moments()[i] = m;
    opt.second_moments()[i] = v;
  }
}

}  // namespace

Checkpoint GanTrainer::to_checkpoint() const {
  Checkpoint c;
  c.phase = phase_name(phase_);
  c.step = step_;
  c.config = {{"generator", cfg_.generator},
              {"discriminator", cfg_.discriminator},
              {"train", cfg_.train},
              {"losses", cfg_.losses},
              {"extractor", extractor_->config()},
              {"schedule", schedule_json(schedule_)},
              {"adam_steps", {{"generator", g_opt_.steps()}, {"discriminator", d_opt_.steps()}}}};
  c.rng_state = rng_state(data_rng_);
  c.put_params("generator.", gen_.params());
  c.put_params("discriminator.", dis_.params());
  c.put_params("extractor.", extractor_->params());
  put_tap_scales(c, *extractor_);
  put_moments(c, "adam.generator.", gen_.params(), g_opt_);
  put_moments(c, "adam.discriminator.", dis_.params(), d_opt_);
  return c;
}

void GanTrainer::load_state(const Checkpoint& c) {
  const Phase p = parse_phase(c.phase);
  const bool compatible = p == phase_ || (phase_ == Phase::Res && p == Phase::ResFinetune);
  if (!compatible) {
    fail(ErrorKind::PhaseError, "cannot load a " + c.phase + " checkpoint into a " + phase_name(phase_) + " trainer");
  }
  try {
    c.load_params("generator.", gen_.params());
    c.load_params("discriminator.", dis_.params());
    load_moments(c, "adam.generator.", gen_.params(), g_opt_);
    load_moments(c, "adam.discriminator.", dis_.params(), d_opt_);
    g_opt_.set_steps(c.config.at("adam_steps").at("generator").get<std::int64_t>());
    d_opt_.set_steps(c.config.at("adam_steps").at("discriminator").get<std::int64_t>());
    schedule_ = schedule_from(c.config.at("schedule"));
  } catch (const json::exception& e) {
    fail(ErrorKind::DecodeError, std::string("checkpoint config: ") + e.what());
  }
  restore_rng(data_rng_, c.rng_state);
  phase_ = p;
  step_ = c.step;
}

PhaseConfig phase_config_from_checkpoint(const Checkpoint& c) {
  PhaseConfig p;
  try {
    p.generator = c.config.at("generator").get<GeneratorConfig>();
    if (c.config.contains("discriminator")) p.discriminator = c.config.at("discriminator").get<DiscriminatorConfig>();
    if (c.config.contains("train")) p.train = c.config.at("train").get<TrainConfig>();
    if (c.config.contains("losses")) p.losses = c.config.at("losses").get<LossWeights>();
  } catch (const json::exception& e) {
    fail(ErrorKind::DecodeError, std::string("checkpoint config: ") + e.what());
  }
  return p;
}

Generator generator_from_checkpoint(const Checkpoint& c) {
  const Phase p = parse_phase(c.phase);
  if (p == Phase::Quality) fail(ErrorKind::PhaseError, "a quality checkpoint holds no generator");
  Rng unused(0);
  Generator g(phase_config_from_checkpoint(c).generator, unused);
  c.load_params("generator.", g.params());
  return g;
}

std::shared_ptr<FeatureExtractor> extractor_from_checkpoint(const Checkpoint& c) {
  ExtractorConfig cfg;
  try {
    cfg = c.config.at("extractor").get<ExtractorConfig>();
  } catch (const json::exception& e) {
    fail(ErrorKind::DecodeError, std::string("checkpoint has no extractor config: ") + e.what());
  }
  Rng unused(0);
  auto ex = std::make_shared<FeatureExtractor>(cfg, unused);
  c.load_params("extractor.", ex->params());
  if (c.has("extractor_taps")) {
    const Tensor& t = c.array("extractor_taps");
    ex->set_tap_scales(std::vector<double>(t.data().begin(), t.data().end()));
  }
  ex->freeze();
  return ex;
}

Checkpoint quality_checkpoint(const FeatureExtractor& ex) {
  Checkpoint c;
  c.phase = phase_name(Phase::Quality);
  c.config = {{"extractor", ex.config()}};
  c.put_params("extractor.", ex.params());
  put_tap_scales(c, ex);
  return c;
}

namespace {

// Keeps header plus rows with step <= `keep` of an existing CSV log.
void truncate_log(const fs::path& path, std::int64_t keep, const std::string& header) {
  std::vector<std::string> rows;
  std::ifstream in(path);
  std::string line;
  bool first = true;
  while (in && std::getline(in, line)) {
    if (first) {
      first = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stoll(line.substr(0, line.find(','))) <= keep) rows.push_back(line);
  }
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  out << header << '\n';
  for (const auto& r : rows) out << r << '\n';
}

class RunFiles {
 public:
  RunFiles(const fs::path& dir, std::int64_t resumed_at) : dir_(dir) {
    std::error_code ec;
    fs::create_directories(dir / "checkpoints", ec);
    fs::create_directories(dir / "previews", ec);
    if (ec) fail(ErrorKind::IoError, "cannot create run directory " + dir.string() + ": " + ec.message());
    truncate_log(dir / "train_log.csv", resumed_at, "step,lr,pixel,fp,fp_style,identity,gan,total,d_loss");
    log_.open(dir / "train_log.csv", std::ios::app | std::ios::binary);
    if (!log_) fail(ErrorKind::IoError, "cannot write " + (dir / "train_log.csv").string());
  }

  void log(const StepReport& r) {
    const LossReport& l = r.loss;
    log_ << r.step << ',' << fmt(r.lr) << ',' << fmt(l.pixel) << ',' << fmt(l.fp) << ',' << fmt(l.fp_style) << ','
         << fmt(l.identity) << ',' << fmt(l.gan) << ',' << fmt(l.total) << ',' << fmt(r.d_loss) << '\n';
    log_.flush();
  }

  void validation(std::int64_t resumed_at, const std::string& header) {
    if (!validation_ready_) {
      truncate_log(dir_ / "validation.csv", resumed_at, header);
      validation_ready_ = true;
    }
  }

  void validation_row(const std::string& row) {
    std::ofstream out(dir_ / "validation.csv", std::ios::app | std::ios::binary);
    out << row << '\n';
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::ofstream log_;
  bool validation_ready_ = false;
};

std::string step_name(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%07lld", static_cast<long long>(step));
  return buf;
}

using Sampler = std::function<GanBatch(Rng&)>;
using Validator = std::function<void(GanTrainer&, RunFiles&)>;

Checkpoint run_loop(GanTrainer& trainer, const Sampler& sample, const Validator& validate, const TrainJob& job,
                    std::int64_t resumed_at) {
  RunFiles files(job.run_dir, resumed_at);
  const TrainConfig& tc = trainer.config().train;
  const std::int64_t horizon = trainer.schedule().horizon;
  const std::int64_t stop = std::min(horizon, job.stop_at.value_or(horizon));
  while (trainer.steps() < stop) {
    const GanBatch batch = sample(trainer.data_rng());
    const StepReport r = trainer.step(batch);
    files.log(r);
    if (job.on_step) job.on_step(r);
    if (r.step % tc.checkpoint_every == 0 && r.step < stop) {
      save_checkpoint(trainer.to_checkpoint(), files.dir() / "checkpoints" / (step_name(r.step) + ".ckpt"));
    }
    if (r.step % tc.validate_every == 0 || r.step == stop) validate(trainer, files);
  }
  Checkpoint out = trainer.to_checkpoint();
  save_checkpoint(out, files.dir() / (phase_name(trainer.phase()) + ".ckpt"));
  return out;
}

std::shared_ptr<const FeatureExtractor> require_extractor(const TrainJob& job) {
  if (!job.extractor) fail(ErrorKind::ConfigError, "training job has no perceptual extractor");
  if (!job.extractor->frozen()) fail(ErrorKind::ConfigError, "perceptual extractor must be frozen");
  return job.extractor;
}

Tensor stack_first(const std::vector<fs::path>& paths, std::size_t count, ImageCache& cache) {
  std::vector<Image> imgs;
  for (std::size_t i = 0; i < std::min(count, paths.size()); ++i) imgs.push_back(cache.get(paths[i]));
  return imgs.empty() ? Tensor() : to_tensor(imgs);
}

void save_previews(const Tensor& out, const fs::path& dir, std::int64_t step) {
  const auto imgs = to_images(out);
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    save_image(imgs[i], dir / "previews" / (step_name(step) + "_" + std::to_string(i) + ".png"));
  }
}

}  // namespace

Checkpoint train_syn(const Corpus& corpus, const TrainJob& job) {
  if (corpus.hq_paths.empty() || corpus.cataract_paths.empty()) {
    fail(ErrorKind::EmptyCorpus, "Syn training needs HQ and cataract images");
  }
  const RunConfig& rc = job.config;
  const FoldSplit split =
      rc.data.fold < 0 ? whole_corpus_split(corpus) : make_folds(corpus, rc.seed).at(static_cast<std::size_t>(rc.data.fold));
  GanTrainer trainer(Phase::Syn, rc.syn, require_extractor(job), rc.seed);
  if (job.resume) trainer.load_state(load_checkpoint(*job.resume));
  if (trainer.phase() != Phase::Syn) fail(ErrorKind::PhaseError, "Syn training resumed from a non-syn checkpoint");

  auto cache = std::make_shared<ImageCache>(rc.data.resize);
  const int batch = rc.syn.train.batch;
  const int patch = rc.syn.train.patch;
  Sampler sample = [&split, cache, batch, patch](Rng& rng) {
    return syn_batch(sample_unpaired_batch(split, batch, patch, rng, *cache));
  };
  const Tensor val_hq = stack_first(split.val_hq, 4, *cache);
  const Tensor val_cat = stack_first(split.val_cat, 4, *cache);
  const std::int64_t resumed = trainer.steps();
  Validator validate = [&](GanTrainer& t, RunFiles& files) {
    files.validation(resumed, "step,p_real,p_fake");
    if (val_hq.empty() || val_cat.empty()) return;
    const Tensor fake = t.generator().infer(val_hq);
    double p_real = 0.0;
    double p_fake = 0.0;
    for (double p : t.discriminator().predict(val_cat)) p_real += p / val_cat.shape().n;
    for (double p : t.discriminator().predict(fake)) p_fake += p / fake.shape().n;
    files.validation_row(std::to_string(t.steps()) + "," + fmt(p_real) + "," + fmt(p_fake));
    save_previews(fake, files.dir(), t.steps());
  };
  return run_loop(trainer, sample, validate, job, resumed);
}

namespace {

struct PairSplit {
  std::vector<PairRecord> train;
  std::vector<PairRecord> val;
};

PairSplit split_pairs(const std::vector<PairRecord>& pairs, const RunConfig& rc) {
  if (pairs.empty()) fail(ErrorKind::EmptyCorpus, "no training pairs");
  if (rc.data.fold < 0 || pairs.size() < static_cast<std::size_t>(kFolds)) return {pairs, {}};
  const auto folds = fold_partition(pairs.size(), rc.seed);
  const auto& held = folds.at(static_cast<std::size_t>(rc.data.fold));
  PairSplit out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    (std::find(held.begin(), held.end(), i) != held.end() ? out.val : out.train).push_back(pairs[i]);
  }
  return out;
}

Checkpoint run_res(GanTrainer& trainer, const std::vector<PairRecord>& pairs, const TrainJob& job) {
  const RunConfig& rc = job.config;
  const PairSplit split = split_pairs(pairs, rc);
  auto cache = std::make_shared<ImageCache>(rc.data.resize);
  const int batch = trainer.config().train.batch;
  const int patch = trainer.config().train.patch;
  std::vector<PairRecord> train = split.train;
  Sampler sample = [train, cache, batch, patch](Rng& rng) {
    return res_batch(sample_paired_batch(train, batch, patch, rng, *cache));
  };
  std::vector<PairRecord> val(split.val.begin(), split.val.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(8, split.val.size())));
  const std::int64_t resumed = trainer.steps();
  Validator validate = [val, cache, resumed](GanTrainer& t, RunFiles& files) {
    files.validation(resumed, "step,psnr,ssim");
    if (val.empty()) return;
    double p = 0.0;
    double s = 0.0;
    std::vector<Image> shown;
    for (const auto& rec : val) {
      const Image hq = cache->get(rec.hq_path);
      const Image out = to_images(t.generator().infer(to_tensor(cache->get(rec.syn_path))))[0];
      p += psnr(out, hq) / static_cast<double>(val.size());
      s += ssim(out, hq) / static_cast<double>(val.size());
      if (shown.size() < 2) shown.push_back(out);
    }
    files.validation_row(std::to_string(t.steps()) + "," + fmt(p) + "," + fmt(s));
    save_previews(to_tensor(shown), files.dir(), t.steps());
  };
  return run_loop(trainer, sample, validate, job, resumed);
}

}  // namespace

Checkpoint train_res(const std::vector<PairRecord>& pairs, const TrainJob& job) {
  if (pairs.empty()) fail(ErrorKind::EmptyCorpus, "Res training needs at least one pair");
  GanTrainer trainer(Phase::Res, job.config.res, require_extractor(job), job.config.seed);
  if (job.resume) {
    trainer.load_state(load_checkpoint(*job.resume));
    if (trainer.phase() != Phase::Res) fail(ErrorKind::PhaseError, "Res training resumed from a non-res checkpoint");
  }
  return run_res(trainer, pairs, job);
}

Checkpoint finetune_res(const Checkpoint& res, const std::vector<PairRecord>& pairs, const TrainJob& job) {
  const Phase p = parse_phase(res.phase);
  if (p != Phase::Res && p != Phase::ResFinetune) {
    fail(ErrorKind::PhaseError, "fine-tuning needs a res checkpoint, got phase " + res.phase);
  }
  if (pairs.empty()) fail(ErrorKind::EmptyCorpus, "fine-tuning needs at least one pair");
  PhaseConfig cfg = phase_config_from_checkpoint(res);
  cfg.train.lr_finetune = job.config.res.train.lr_finetune;
  cfg.train.finetune_iterations = job.config.res.train.finetune_iterations;
  cfg.train.checkpoint_every = job.config.res.train.checkpoint_every;
  cfg.train.validate_every = job.config.res.train.validate_every;
  std::shared_ptr<const FeatureExtractor> ex = job.extractor ? job.extractor : extractor_from_checkpoint(res);
  GanTrainer trainer(Phase::Res, cfg, ex, job.config.seed);
  trainer.load_state(res);
  if (p == Phase::Res) trainer.begin_finetune();
  if (job.resume) trainer.load_state(load_checkpoint(*job.resume));
  return run_res(trainer, pairs, job);
}

fs::path generate_pairs(const Checkpoint& syn, const std::vector<fs::path>& hq_list, const fs::path& out_dir,
                        int side) {
  if (parse_phase(syn.phase) != Phase::Syn) {
    fail(ErrorKind::PhaseError, "pair generation needs a syn checkpoint, got phase " + syn.phase);
  }
  if (hq_list.empty()) fail(ErrorKind::EmptyCorpus, "no HQ images to degrade");
  const Generator gen = generator_from_checkpoint(syn);
  std::error_code ec;
  fs::create_directories(out_dir / "hq", ec);
  fs::create_directories(out_dir / "syn", ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<PairRecord> records;
  for (const fs::path& src : hq_list) {
    const Image hq = resize(load_image(src), side, side);
    const Image degraded = to_images(gen.infer(to_tensor(hq)))[0];
    const std::string name = src.stem().string() + ".png";
    PairRecord r{out_dir / "hq" / name, out_dir / "syn" / name};
    save_image(hq, r.hq_path);
    save_image(degraded, r.syn_path);
    records.push_back(std::move(r));
  }
  const fs::path manifest = out_dir / "pairs.tsv";
  write_pairs(manifest, records);
  return manifest;
}

std::vector<fs::path> restore_directory(const Checkpoint& ckpt, const fs::path& input_dir, const fs::path& output_dir) {
  const Generator gen = generator_from_checkpoint(ckpt);
  const auto inputs = list_images(input_dir);
  if (inputs.empty()) fail(ErrorKind::EmptyCorpus, "no images in " + input_dir.string());
  std::error_code ec;
  fs::create_directories(output_dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + output_dir.string() + ": " + ec.message());
  std::vector<fs::path> written;
  for (const fs::path& src : inputs) {
    const Image out = to_images(gen.infer(to_tensor(load_image(src))))[0];
    const fs::path dst = output_dir / src.filename();
    save_image(out, dst);
    written.push_back(dst);
  }
  return written;
}

}  // namespace catintell
