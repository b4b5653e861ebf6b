#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "catintell/checkpoint.hpp"
#include "catintell/config.hpp"
#include "catintell/dataset.hpp"
#include "catintell/discriminator.hpp"
#include "catintell/generator.hpp"
#include "catintell/losses.hpp"
#include "catintell/perceptual.hpp"
#include "catintell/schedule.hpp"

namespace catintell {

enum class Phase { Syn, Res, ResFinetune, Quality };

std::string phase_name(Phase p);
Phase parse_phase(const std::string& text);

struct StepReport {
  std::int64_t step = 0;
  double lr = 0.0;
  LossReport loss;
  double d_loss = 0.0;
  double p_real = 0.0;
  double p_fake = 0.0;
};

// One alternation's tensors. `source` feeds the generator, `real` is the
// discriminator's positive class, and the three targets drive the pixel,
// fp and identity terms.
struct GanBatch {
  Tensor source;
  Tensor real;
  Tensor pixel_target;
  Tensor fp_target;
  Tensor identity;
};

// Unpaired (hq, cataract): degrade hq toward the cataract domain.
GanBatch syn_batch(const ImageBatch& unpaired);
// Paired (syn, hq): restore syn toward hq.
GanBatch res_batch(const ImageBatch& paired);

struct GeneratorObjective {
  Var total;
  LossReport parts;
};

// Weighted composite for the generator; the discriminator only scores.
GeneratorObjective generator_objective(const Generator& gen, const Discriminator& dis, const FeatureExtractor& ex,
                                       const GanBatch& b, const LossWeights& w, bool soft_target);
// Same, reusing an already computed gen(b.source).
GeneratorObjective generator_objective(const Generator& gen, const Discriminator& dis, const FeatureExtractor& ex,
                                       const GanBatch& b, const LossWeights& w, bool soft_target, const Var& fake);
// 0.5 bce(real, 1) + 0.5 bce(fake, 0), with `fake` taken as given.
Var discriminator_objective(const Discriminator& dis, const Var& real, const Var& fake);

// Generator, discriminator, both optimizers, the data rng and the step
// counter: everything a checkpoint must hold to resume bit-exactly.
class GanTrainer {
 public:
  GanTrainer(Phase phase, const PhaseConfig& cfg, std::shared_ptr<const FeatureExtractor> extractor,
             std::uint64_t seed);

  // Discriminator update on (real -> 1, detached fake -> 0), then a generator
  // update on the weighted composite with the discriminator frozen. Update k
  // uses lr_at(schedule, k). A non-finite loss or gradient raises
  // NumericalError and leaves every parameter and moment as it was.
  StepReport step(const GanBatch& batch);

  Phase phase() const { return phase_; }
  std::int64_t steps() const { return step_; }
  const Schedule& schedule() const { return schedule_; }
  const PhaseConfig& config() const { return cfg_; }
  Generator& generator() { return gen_; }
  const Generator& generator() const { return gen_; }
  Discriminator& discriminator() { return dis_; }
  const Discriminator& discriminator() const { return dis_; }
  const FeatureExtractor& extractor() const { return *extractor_; }
  Rng& data_rng() { return data_rng_; }

  // Switches a trained Res state to the fine-tuning schedule at step 0.
  void begin_finetune();

  Checkpoint to_checkpoint() const;
  void load_state(const Checkpoint& ckpt);

 private:
  Phase phase_;
  PhaseConfig cfg_;
  std::shared_ptr<const FeatureExtractor> extractor_;
  Generator gen_;
  Discriminator dis_;
  Adam g_opt_;
  Adam d_opt_;
  Rng data_rng_;
  Schedule schedule_;
  std::int64_t step_ = 0;
};

// Rebuilds the pieces a checkpoint carries on its own.
Generator generator_from_checkpoint(const Checkpoint& ckpt);
std::shared_ptr<FeatureExtractor> extractor_from_checkpoint(const Checkpoint& ckpt);
Checkpoint quality_checkpoint(const FeatureExtractor& ex);
PhaseConfig phase_config_from_checkpoint(const Checkpoint& ckpt);

struct TrainJob {
  RunConfig config;
  std::filesystem::path run_dir;
  std::optional<std::filesystem::path> resume;
  // Stop once this many updates are done; the schedule still spans the full horizon.
  std::optional<std::int64_t> stop_at;
  std::shared_ptr<const FeatureExtractor> extractor;
  std::function<void(const StepReport&)> on_step;
};

// Each loop writes run_dir/train_log.csv, run_dir/validation.csv,
// run_dir/previews/, periodic run_dir/checkpoints/step_N.ckpt and the final
// run_dir/<phase>.ckpt, which is also returned.
Checkpoint train_syn(const Corpus& corpus, const TrainJob& job);
Checkpoint train_res(const std::vector<PairRecord>& pairs, const TrainJob& job);
Checkpoint finetune_res(const Checkpoint& res, const std::vector<PairRecord>& pairs, const TrainJob& job);

// Resizes each HQ image, degrades it with the Syn generator and writes
// out_dir/hq, out_dir/syn and out_dir/pairs.tsv. Returns the manifest path.
std::filesystem::path generate_pairs(const Checkpoint& syn, const std::vector<std::filesystem::path>& hq_list,
                                     const std::filesystem::path& out_dir, int side);

// Applies a generator checkpoint to every image in `input_dir` at native size.
std::vector<std::filesystem::path> restore_directory(const Checkpoint& ckpt, const std::filesystem::path& input_dir,
                                                     const std::filesystem::path& output_dir);

}  // namespace catintell
