#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "catintell/baseline.hpp"
#include "catintell/checkpoint.hpp"
#include "catintell/config.hpp"
#include "catintell/dataset.hpp"
#include "catintell/error.hpp"
#include "catintell/metrics.hpp"
#include "catintell/perceptual.hpp"
#include "catintell/trainer.hpp"

namespace fs = std::filesystem;
using namespace catintell;

namespace {

struct Common {
  std::optional<std::string> config;
  std::optional<std::string> profile;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run config (unknown keys are rejected)");
  cmd->add_option("--profile", c.profile, "Preset: paper or desk (default paper)")
      ->check(CLI::IsMember({"paper", "desk"}));
  cmd->add_option("--seed", c.seed, "Seed for every random choice (default 0)");
}

RunConfig resolve(const Common& c) {
  std::optional<fs::path> file;
  if (c.config) file = fs::path(*c.config);
  return load_run_config(file, c.profile, c.seed);
}

void write_config_snapshot(const RunConfig& rc, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream out(dir / "config.json", std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot write " + (dir / "config.json").string());
  out << json(rc).dump(2) << '\n';
}

std::function<void(const StepReport&)> progress(const std::string& tag, std::int64_t total) {
  const std::int64_t every = std::max<std::int64_t>(1, total / 20);
  return [tag, total, every](const StepReport& r) {
    if (r.step % every != 0 && r.step != total) return;
    std::fprintf(stderr, "[%s] step %lld/%lld lr %.3g total %.5f pixel %.5f d_loss %.4f p_real %.3f p_fake %.3f\n",
                 tag.c_str(), static_cast<long long>(r.step), static_cast<long long>(total), r.lr, r.loss.total,
                 r.loss.pixel, r.d_loss, r.p_real, r.p_fake);
  };
}

std::shared_ptr<const FeatureExtractor> untrained_extractor(const RunConfig& rc,
                                                            const std::vector<fs::path>& calibration) {
  Rng rng = derive_rng(rc.seed, 50);
  auto ex = std::make_shared<FeatureExtractor>(rc.perceptual.extractor, rng);
  std::vector<Image> images;
  for (std::size_t i = 0; i < calibration.size() && i < 32; ++i) images.push_back(load_image(calibration[i]));
  if (!images.empty()) ex->calibrate_taps(images, rc.perceptual.training.side);
  ex->freeze();
  return ex;
}

std::shared_ptr<const FeatureExtractor> train_extractor(const RunConfig& rc, const fs::path& manifest,
                                                        const fs::path& run_dir) {
  std::fprintf(stderr, "training quality backbone on %s\n", manifest.string().c_str());
  Rng rng = derive_rng(rc.seed, 50);
  auto samples = read_quality_manifest(manifest);
  auto ex = std::make_shared<FeatureExtractor>(
      train_quality_backbone(samples, rc.perceptual.extractor, rc.perceptual.training, rng));
  save_checkpoint(quality_checkpoint(*ex), run_dir / "quality.ckpt");
  return ex;
}

// --extractor wins; otherwise a quality manifest trains one; otherwise the
// extractor keeps its random initialization.
std::shared_ptr<const FeatureExtractor> pick_extractor(const RunConfig& rc, const std::optional<std::string>& file,
                                                       const std::optional<fs::path>& quality,
                                                       const fs::path& run_dir,
                                                       const std::vector<fs::path>& calibration) {
  if (file) return extractor_from_checkpoint(load_checkpoint(*file));
  if (quality && fs::exists(*quality)) return train_extractor(rc, *quality, run_dir);
  std::fprintf(stderr, "warning: no quality labels found, using an untrained perceptual extractor\n");
  return untrained_extractor(rc, calibration);
}

int run(int argc, char** argv) {
  CLI::App app{"Cataract fundus degradation synthesis and restoration"};
  app.require_subcommand(1);

  Common common;

  auto* make_toy = app.add_subcommand("make-toy", "Render a procedural toy corpus with quality labels");
  std::string toy_out;
  int toy_count = 20;
  int toy_holdout = 0;
  std::optional<int> toy_side;
  make_toy->add_option("--output", toy_out, "Corpus directory to create")->required();
  make_toy->add_option("--count", toy_count, "Number of HQ images")->capture_default_str();
  make_toy->add_option("--holdout", toy_holdout, "Extra (hq, degraded) pairs kept out of the corpus")
      ->capture_default_str();
  make_toy->add_option("--side", toy_side, "Image side in px (default: data.resize)");
  add_common(make_toy, common);

  auto* train_quality = app.add_subcommand("train-quality", "Train the perceptual backbone on quality labels");
  std::string quality_in;
  std::string quality_out;
  train_quality->add_option("--input", quality_in, "quality.tsv manifest")->required();
  train_quality->add_option("--output", quality_out, "Checkpoint file to write")->required();
  add_common(train_quality, common);

  auto* train_syn_cmd = app.add_subcommand("train-syn", "Train the degradation GAN on unpaired data");
  std::string syn_data;
  std::string syn_out;
  std::optional<std::string> syn_extractor;
  std::optional<std::string> syn_resume;
  std::optional<std::int64_t> syn_iters;
  train_syn_cmd->add_option("--data", syn_data, "Corpus root with hq/ and cataract/")->required();
  train_syn_cmd->add_option("--output", syn_out, "Run directory")->required();
  train_syn_cmd->add_option("--extractor", syn_extractor, "Checkpoint holding a trained perceptual extractor");
  train_syn_cmd->add_option("--resume", syn_resume, "Syn checkpoint to continue from");
  train_syn_cmd->add_option("--iters", syn_iters, "Override syn.train.iterations");
  add_common(train_syn_cmd, common);

  auto* synthesize = app.add_subcommand("synthesize", "Degrade HQ images with a Syn checkpoint into pairs");
  std::string synth_ckpt;
  std::string synth_in;
  std::string synth_out;
  synthesize->add_option("--ckpt", synth_ckpt, "Syn checkpoint")->required();
  synthesize->add_option("--input", synth_in, "Directory of HQ images")->required();
  synthesize->add_option("--output", synth_out, "Pair store directory (hq/, syn/, pairs.tsv)")->required();
  add_common(synthesize, common);

  auto* train_res_cmd = app.add_subcommand("train-res", "Train the restoration GAN on synthetic pairs");
  std::string res_pairs;
  std::string res_out;
  std::optional<std::string> res_extractor;
  std::optional<std::string> res_quality;
  std::optional<std::string> res_resume;
  std::optional<std::int64_t> res_iters;
  train_res_cmd->add_option("--pairs", res_pairs, "pairs.tsv written by synthesize")->required();
  train_res_cmd->add_option("--output", res_out, "Run directory")->required();
  train_res_cmd->add_option("--extractor", res_extractor, "Checkpoint holding a trained perceptual extractor");
  train_res_cmd->add_option("--quality", res_quality, "quality.tsv used when no --extractor is given");
  train_res_cmd->add_option("--resume", res_resume, "Res checkpoint to continue from");
  train_res_cmd->add_option("--iters", res_iters, "Override res.train.iterations");
  add_common(train_res_cmd, common);

  auto* finetune = app.add_subcommand("finetune-res", "Fine-tune a Res checkpoint with the low-rate schedule");
  std::string ft_ckpt;
  std::string ft_pairs;
  std::string ft_out;
  std::optional<std::string> ft_resume;
  std::optional<std::int64_t> ft_iters;
  finetune->add_option("--ckpt", ft_ckpt, "Res checkpoint")->required();
  finetune->add_option("--pairs", ft_pairs, "pairs.tsv written by synthesize")->required();
  finetune->add_option("--output", ft_out, "Run directory")->required();
  finetune->add_option("--resume", ft_resume, "res-finetune checkpoint to continue from");
  finetune->add_option("--iters", ft_iters, "Override res.train.finetune_iterations");
  add_common(finetune, common);

  auto* restore = app.add_subcommand("restore", "Apply a generator checkpoint to a directory of images");
  std::string restore_in;
  std::string restore_ckpt;
  std::string restore_out;
  restore->add_option("--input", restore_in, "Directory of images")->required();
  restore->add_option("--ckpt", restore_ckpt, "Generator checkpoint (res, res-finetune or syn)")->required();
  restore->add_option("--output", restore_out, "Output directory (same filenames)")->required();
  add_common(restore, common);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "PSNR/SSIM of predictions against targets");
  std::string eval_pred;
  std::string eval_target;
  std::optional<std::string> eval_out;
  evaluate_cmd->add_option("--pred", eval_pred, "Directory of predictions")->required();
  evaluate_cmd->add_option("--target", eval_target, "Directory of targets with matching filenames")->required();
  evaluate_cmd->add_option("--output", eval_out, "Report directory (default: --pred)");
  add_common(evaluate_cmd, common);

  auto* degrade = app.add_subcommand("degrade-baseline", "Blur-and-haze degradation of a directory of images");
  std::string degrade_in;
  std::string degrade_out;
  HazeParams haze = toy_tiers()[1];
  std::vector<double> light;
  degrade->add_option("--input", degrade_in, "Directory of images")->required();
  degrade->add_option("--output", degrade_out, "Output directory")->required();
  degrade->add_option("--t", haze.t, "Transmission in [0, 1]")->capture_default_str();
  degrade->add_option("--sigma", haze.sigma, "Gaussian blur sigma in px")->capture_default_str();
  degrade->add_option("--light", light, "Atmospheric light R G B (default 0.92 0.86 0.74)")->expected(3);
  add_common(degrade, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const RunConfig rc = resolve(common);

  if (*make_toy) {
    const auto toy = make_toy_corpus(toy_count, rc.seed, toy_out, toy_side.value_or(rc.data.resize), toy_holdout);
    std::printf("wrote %zu HQ, %zu cataract images and %s\n", toy.corpus.hq_paths.size(),
                toy.corpus.cataract_paths.size(), toy.quality_manifest.string().c_str());
  } else if (*train_quality) {
    Rng rng = derive_rng(rc.seed, 50);
    const auto samples = read_quality_manifest(quality_in);
    const FeatureExtractor ex = train_quality_backbone(samples, rc.perceptual.extractor, rc.perceptual.training, rng);
    save_checkpoint(quality_checkpoint(ex), quality_out);
    std::printf("training accuracy %.3f, wrote %s\n", quality_accuracy(ex, samples, rc.perceptual.training.side),
                quality_out.c_str());
  } else if (*train_syn_cmd) {
    RunConfig cfg = rc;
    if (syn_iters) cfg.syn.train.iterations = *syn_iters;
    cfg.validate();
    const Corpus corpus = scan_corpus(syn_data, cfg.data.hq_dir, cfg.data.cataract_dir);
    write_config_snapshot(cfg, syn_out);
    TrainJob job;
    job.config = cfg;
    job.run_dir = syn_out;
    if (syn_resume) job.resume = fs::path(*syn_resume);
    job.extractor = pick_extractor(cfg, syn_extractor, fs::path(syn_data) / "quality.tsv", syn_out,
                                   corpus.hq_paths);
    job.on_step = progress("syn", cfg.syn.train.iterations);
    train_syn(corpus, job);
    std::printf("wrote %s\n", (fs::path(syn_out) / "syn.ckpt").string().c_str());
  } else if (*synthesize) {
    const auto hq = list_images(synth_in);
    const fs::path manifest = generate_pairs(load_checkpoint(synth_ckpt), hq, synth_out, rc.data.resize);
    std::printf("wrote %zu pairs to %s\n", hq.size(), manifest.string().c_str());
  } else if (*train_res_cmd) {
    RunConfig cfg = rc;
    if (res_iters) cfg.res.train.iterations = *res_iters;
    cfg.validate();
    const auto pairs = read_pairs(res_pairs);
    write_config_snapshot(cfg, res_out);
    TrainJob job;
    job.config = cfg;
    job.run_dir = res_out;
    if (res_resume) job.resume = fs::path(*res_resume);
    std::optional<fs::path> quality;
    if (res_quality) quality = fs::path(*res_quality);
    std::vector<fs::path> targets;
    for (const auto& p : pairs) targets.push_back(p.hq_path);
    job.extractor = pick_extractor(cfg, res_extractor, quality, res_out, targets);
    job.on_step = progress("res", cfg.res.train.iterations);
    train_res(pairs, job);
    std::printf("wrote %s\n", (fs::path(res_out) / "res.ckpt").string().c_str());
  } else if (*finetune) {
    RunConfig cfg = rc;
    if (ft_iters) cfg.res.train.finetune_iterations = *ft_iters;
    cfg.validate();
    const auto pairs = read_pairs(ft_pairs);
    write_config_snapshot(cfg, ft_out);
    TrainJob job;
    job.config = cfg;
    job.run_dir = ft_out;
    if (ft_resume) job.resume = fs::path(*ft_resume);
    job.on_step = progress("res-finetune", cfg.res.train.finetune_iterations);
    finetune_res(load_checkpoint(ft_ckpt), pairs, job);
    std::printf("wrote %s\n", (fs::path(ft_out) / "res-finetune.ckpt").string().c_str());
  } else if (*restore) {
    const auto written = restore_directory(load_checkpoint(restore_ckpt), restore_in, restore_out);
    std::printf("restored %zu images into %s\n", written.size(), restore_out.c_str());
  } else if (*evaluate_cmd) {
    const EvalReport report = evaluate(eval_pred, eval_target);
    const fs::path out = eval_out ? fs::path(*eval_out) : fs::path(eval_pred);
    write_report(report, out);
    std::printf("%zu images: PSNR %.4f dB, SSIM %.6f (report in %s)\n", report.rows.size(), report.psnr_mean,
                report.ssim_mean, out.string().c_str());
  } else if (*degrade) {
    if (!light.empty()) haze.light = {light[0], light[1], light[2]};
    haze.validate();
    const auto inputs = list_images(degrade_in);
    if (inputs.empty()) fail(ErrorKind::EmptyCorpus, "no images in " + degrade_in);
    fs::create_directories(degrade_out);
    for (const auto& p : inputs) save_image(degrade_traditional(load_image(p), haze), fs::path(degrade_out) / p.filename());
    std::printf("degraded %zu images into %s\n", inputs.size(), degrade_out.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.kind() == ErrorKind::UsageError ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
