#pragma once

#include <cstdint>
#include <string>

#include "catintell/nn.hpp"

namespace catintell {

enum class Decay { Cosine, Linear };

std::string decay_name(Decay d);
Decay parse_decay(const std::string& text);

// Linear warmup from 0 to `base` over `warmup` steps, then decay to 0 at `horizon`.
struct Schedule {
  double base = 1e-5;
  std::int64_t warmup = 1000;
  std::int64_t horizon = 80000;
  Decay decay = Decay::Cosine;
};

double lr_at(const Schedule& s, std::int64_t step);

struct TrainConfig {
  std::int64_t iterations = 80000;
  int batch = 8;
  double lr_base = 1e-5;
  double lr_finetune = 1e-6;
  std::int64_t warmup_iters = 1000;
  Decay decay = Decay::Cosine;
  std::int64_t finetune_iterations = 8000;
  AdamConfig adam;
  int patch = 256;
  std::int64_t checkpoint_every = 5000;
  std::int64_t validate_every = 1000;
  double clip_norm = 1.0;
  bool soft_target = false;

  void validate() const;
  Schedule main_schedule() const;
  // Fine-tuning: no warmup, linear decay from lr_finetune.
  Schedule finetune_schedule() const;
};

}  // namespace catintell
