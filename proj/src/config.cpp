#include "catintell/config.hpp"

#include <fstream>

#include "catintell/error.hpp"

namespace catintell {

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void to_json(json& j, const GeneratorConfig& c) {
  j = {{"stages", c.stages},
       {"width", c.width},
       {"encoder_blocks", c.encoder_blocks},
       {"decoder_blocks", c.decoder_blocks},
       {"bottleneck_blocks", c.bottleneck_blocks},
       {"kernel", c.kernel},
       {"conv_groups", c.conv_groups},
       {"global_residual", c.global_residual}};
}

void from_json(const json& j, GeneratorConfig& c) {
  read(j, "stages", c.stages);
  read(j, "width", c.width);
  read(j, "encoder_blocks", c.encoder_blocks);
  read(j, "decoder_blocks", c.decoder_blocks);
  read(j, "bottleneck_blocks", c.bottleneck_blocks);
  read(j, "kernel", c.kernel);
  read(j, "conv_groups", c.conv_groups);
  read(j, "global_residual", c.global_residual);
}

void to_json(json& j, const DiscriminatorConfig& c) {
  j = {{"stages", c.stages},
       {"embed_dim", c.embed_dim},
       {"window", c.window},
       {"heads", c.heads},
       {"patch", c.patch},
       {"blocks_per_stage", c.blocks_per_stage},
       {"mlp_ratio", c.mlp_ratio},
       {"zero_init_head", c.zero_init_head}};
}

void from_json(const json& j, DiscriminatorConfig& c) {
  read(j, "stages", c.stages);
  read(j, "embed_dim", c.embed_dim);
  read(j, "window", c.window);
  read(j, "heads", c.heads);
  read(j, "patch", c.patch);
  read(j, "blocks_per_stage", c.blocks_per_stage);
  read(j, "mlp_ratio", c.mlp_ratio);
  read(j, "zero_init_head", c.zero_init_head);
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"iterations", c.iterations},
       {"batch", c.batch},
       {"lr_base", c.lr_base},
       {"lr_finetune", c.lr_finetune},
       {"warmup_iters", c.warmup_iters},
       {"decay", decay_name(c.decay)},
       {"finetune_iterations", c.finetune_iterations},
       {"beta1", c.adam.beta1},
       {"beta2", c.adam.beta2},
       {"adam_eps", c.adam.eps},
       {"patch", c.patch},
       {"checkpoint_every", c.checkpoint_every},
       {"validate_every", c.validate_every},
       {"clip_norm", c.clip_norm},
       {"soft_target", c.soft_target}};
}

void from_json(const json& j, TrainConfig& c) {
  read(j, "iterations", c.iterations);
  read(j, "batch", c.batch);
  read(j, "lr_base", c.lr_base);
  read(j, "lr_finetune", c.lr_finetune);
  read(j, "warmup_iters", c.warmup_iters);
  if (j.contains("decay")) c.decay = parse_decay(j.at("decay").get<std::string>());
  read(j, "finetune_iterations", c.finetune_iterations);
  read(j, "beta1", c.adam.beta1);
  read(j, "beta2", c.adam.beta2);
  read(j, "adam_eps", c.adam.eps);
  read(j, "patch", c.patch);
  read(j, "checkpoint_every", c.checkpoint_every);
  read(j, "validate_every", c.validate_every);
  read(j, "clip_norm", c.clip_norm);
  read(j, "soft_target", c.soft_target);
}

void to_json(json& j, const LossWeights& c) {
  j = {{"pixel", c.pixel}, {"fp", c.fp}, {"identity", c.identity}, {"gan", c.gan}, {"style", c.style}};
}

void from_json(const json& j, LossWeights& c) {
  read(j, "pixel", c.pixel);
  read(j, "fp", c.fp);
  read(j, "identity", c.identity);
  read(j, "gan", c.gan);
  read(j, "style", c.style);
}

void to_json(json& j, const ExtractorConfig& c) { j = {{"widths", c.widths}, {"bias", c.bias}}; }

void from_json(const json& j, ExtractorConfig& c) {
  read(j, "widths", c.widths);
  read(j, "bias", c.bias);
}

void to_json(json& j, const RunConfig& c) {
  auto phase = [](const PhaseConfig& p) {
    return json{{"generator", p.generator}, {"discriminator", p.discriminator}, {"train", p.train}, {"losses", p.losses}};
  };
  j = {{"profile", c.profile},
       {"seed", c.seed},
       {"data",
        {{"hq_dir", c.data.hq_dir},
         {"cataract_dir", c.data.cataract_dir},
         {"fold", c.data.fold},
         {"resize", c.data.resize}}},
       {"syn", phase(c.syn)},
       {"res", phase(c.res)},
       {"perceptual",
        {{"extractor", c.perceptual.extractor},
         {"epochs", c.perceptual.training.epochs},
         {"batch", c.perceptual.training.batch},
         {"lr", c.perceptual.training.lr},
         {"side", c.perceptual.training.side}}}};
}

void from_json(const json& j, RunConfig& c) {
  read(j, "profile", c.profile);
  read(j, "seed", c.seed);
  if (j.contains("data")) {
    const json& d = j.at("data");
    read(d, "hq_dir", c.data.hq_dir);
    read(d, "cataract_dir", c.data.cataract_dir);
    read(d, "fold", c.data.fold);
    read(d, "resize", c.data.resize);
  }
  for (auto [key, phase] : {std::pair{"syn", &c.syn}, std::pair{"res", &c.res}}) {
    if (!j.contains(key)) continue;
    const json& p = j.at(key);
    read(p, "generator", phase->generator);
    read(p, "discriminator", phase->discriminator);
    read(p, "train", phase->train);
    read(p, "losses", phase->losses);
  }
  if (j.contains("perceptual")) {
    const json& p = j.at("perceptual");
    read(p, "extractor", c.perceptual.extractor);
    read(p, "epochs", c.perceptual.training.epochs);
    read(p, "batch", c.perceptual.training.batch);
    read(p, "lr", c.perceptual.training.lr);
    read(p, "side", c.perceptual.training.side);
  }
}

RunConfig RunConfig::defaults(const std::string& profile) {
  RunConfig c;
  c.profile = profile;
  c.syn.generator = GeneratorConfig::syn();
  c.syn.discriminator = DiscriminatorConfig::syn();
  c.syn.losses = LossWeights::syn();
  c.res.generator = GeneratorConfig::res();
  c.res.discriminator = DiscriminatorConfig::res();
  c.res.losses = LossWeights::res();
  if (profile == "paper") return c;
  if (profile != "desk") fail(ErrorKind::ConfigError, "unknown profile '" + profile + "' (paper, desk)");

  c.data.resize = 128;
  for (PhaseConfig* p : {&c.syn, &c.res}) {
    p->generator.stages = 2;
    p->generator.width = 8;
    p->discriminator.embed_dim = 8;
    TrainConfig& t = p->train;
    t.iterations = 600;
    t.batch = 4;
    t.patch = 64;
    t.lr_base = 1e-3;
    t.lr_finetune = 1e-4;
    t.warmup_iters = 30;
    t.finetune_iterations = 100;
    t.checkpoint_every = 200;
    t.validate_every = 200;
  }
  c.perceptual.extractor.widths = {8, 16, 32, 64};
  c.perceptual.training = {5, 8, 2e-3, 64};
  return c;
}

void RunConfig::validate() const {
  if (data.resize < 1) fail(ErrorKind::ConfigError, "data.resize must be positive");
  if (data.fold < -1 || data.fold > 9) fail(ErrorKind::ConfigError, "data.fold must lie in [-1, 9]");
  for (const PhaseConfig* p : {&syn, &res}) {
    p->generator.validate();
    p->discriminator.validate();
    p->train.validate();
    if (p->train.patch > data.resize) fail(ErrorKind::ConfigError, "train.patch exceeds data.resize");
  }
  perceptual.extractor.validate();
}

void merge_known(json& base, const json& overlay, const std::string& where) {
  if (!overlay.is_object()) fail(ErrorKind::ConfigError, "config section '" + where + "' must be an object");
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) fail(ErrorKind::ConfigError, "unknown config key '" + path + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_known(slot, it.value(), path);
    } else {
      slot = it.value();
    }
  }
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          const std::optional<std::string>& profile_flag,
                          const std::optional<std::uint64_t>& seed_flag) {
  json doc = json::object();
  if (file) {
    std::ifstream in(*file);
    if (!in) fail(ErrorKind::NotFound, "no such config file: " + file->string());
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      fail(ErrorKind::ConfigError, file->string() + ": " + e.what());
    }
    if (!doc.is_object()) fail(ErrorKind::ConfigError, file->string() + ": top level must be an object");
  }
  std::string profile = "paper";
  if (doc.contains("profile")) profile = doc.at("profile").get<std::string>();
  if (profile_flag) profile = *profile_flag;

  json merged = RunConfig::defaults(profile);
  try {
    merge_known(merged, doc);
    merged["profile"] = profile;
    if (seed_flag) merged["seed"] = *seed_flag;
    RunConfig out = merged.get<RunConfig>();
    out.validate();
    return out;
  } catch (const json::exception& e) {
    fail(ErrorKind::ConfigError, std::string("bad config value: ") + e.what());
  }
}

}  // namespace catintell
