#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "catintell/discriminator.hpp"
#include "catintell/generator.hpp"
#include "catintell/losses.hpp"
#include "catintell/perceptual.hpp"
#include "catintell/schedule.hpp"

namespace catintell {

using json = nlohmann::json;

void to_json(json& j, const GeneratorConfig& c);
void from_json(const json& j, GeneratorConfig& c);
void to_json(json& j, const DiscriminatorConfig& c);
void from_json(const json& j, DiscriminatorConfig& c);
void to_json(json& j, const TrainConfig& c);
void from_json(const json& j, TrainConfig& c);
void to_json(json& j, const LossWeights& c);
void from_json(const json& j, LossWeights& c);
void to_json(json& j, const ExtractorConfig& c);
void from_json(const json& j, ExtractorConfig& c);

struct DataConfig {
  std::string hq_dir = "hq";
  std::string cataract_dir = "cataract";
  // -1 trains on the whole corpus.
  int fold = 0;
  int resize = 768;
};

struct PhaseConfig {
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  TrainConfig train;
  LossWeights losses;
};

struct PerceptualConfig {
  ExtractorConfig extractor;
  QualityTrainConfig training;
};

struct RunConfig {
  std::string profile = "paper";
  std::uint64_t seed = 0;
  DataConfig data;
  PhaseConfig syn;
  PhaseConfig res;
  PerceptualConfig perceptual;

  static RunConfig defaults(const std::string& profile);
  void validate() const;
};

void to_json(json& j, const RunConfig& c);
void from_json(const json& j, RunConfig& c);

// Copies every key of `overlay` into `base`, recursing into objects. A key
// absent from `base` is a ConfigError naming its full path.
void merge_known(json& base, const json& overlay, const std::string& where = "");

// Profile defaults, then the file (if any), then explicit overrides.
RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          const std::optional<std::string>& profile_flag, const std::optional<std::uint64_t>& seed_flag);

}  // namespace catintell
