#include "catintell/schedule.hpp"

#include <cmath>
#include <numbers>

#include "catintell/error.hpp"

namespace catintell {

std::string decay_name(Decay d) { return d == Decay::Cosine ? "cosine" : "linear"; }

Decay parse_decay(const std::string& text) {
  if (text == "cosine") return Decay::Cosine;
  if (text == "linear") return Decay::Linear;
  fail(ErrorKind::ConfigError, "unknown decay '" + text + "'");
}

double lr_at(const Schedule& s, std::int64_t step) {
  if (step < 0 || step > s.horizon) {
    fail(ErrorKind::RangeError, "step " + std::to_string(step) + " outside [0, " + std::to_string(s.horizon) + "]");
  }
  if (step < s.warmup) return s.base * static_cast<double>(step) / static_cast<double>(s.warmup);
  const std::int64_t span = s.horizon - s.warmup;
  if (span <= 0) return s.base;
  const double progress = static_cast<double>(step - s.warmup) / static_cast<double>(span);
  if (s.decay == Decay::Linear) return s.base * (1.0 - progress);
  return s.base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void TrainConfig::validate() const {
  if (iterations < 1 || batch < 1 || patch < 1 || finetune_iterations < 1) {
    fail(ErrorKind::ConfigError, "iterations, batch and patch must be positive");
  }
  if (warmup_iters < 0 || warmup_iters >= iterations) {
    fail(ErrorKind::ConfigError, "warmup_iters must lie in [0, iterations)");
  }
  if (!(lr_base > 0.0) || !(lr_finetune > 0.0)) fail(ErrorKind::ConfigError, "learning rates must be positive");
  if (checkpoint_every < 1 || validate_every < 1) {
    fail(ErrorKind::ConfigError, "checkpoint_every and validate_every must be positive");
  }
}

Schedule TrainConfig::main_schedule() const { return {lr_base, warmup_iters, iterations, decay}; }

Schedule TrainConfig::finetune_schedule() const { return {lr_finetune, 0, finetune_iterations, Decay::Linear}; }

}  // namespace catintell
