#pragma once

#include <vector>

#include "catintell/autograd.hpp"
#include "catintell/layers.hpp"
#include "catintell/nn.hpp"

namespace catintell {

struct DiscriminatorConfig {
  int stages = 4;
  int embed_dim = 32;
  int window = 8;
  std::vector<int> heads{1, 2, 4, 8};
  int patch = 4;
  int blocks_per_stage = 2;
  int mlp_ratio = 4;
  bool zero_init_head = false;

  static DiscriminatorConfig res();
  static DiscriminatorConfig syn();
  void validate() const;
};

// Windowed-attention classifier: patch embedding, stages of (attention,
// MLP) block pairs with every second block shifted by half a window, patch
// merging between stages, then LayerNorm, global pooling and a sigmoid unit.
class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& cfg, Rng& rng);

  const DiscriminatorConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::size_t parameter_count() const { return params_.scalar_count(); }

  // (N, 3, H, W) -> (N, 1, 1, 1) realness probabilities.
  Var forward(const Var& x) const;
  std::vector<double> predict(const Tensor& x) const;

 private:
  struct Block {
    Norm attn_norm;
    Conv qkv;
    Var rel_bias;
    Conv proj;
    Norm mlp_norm;
    Conv fc1;
    Conv fc2;
    int heads = 1;
    bool shifted = false;
  };
  struct Stage {
    Norm merge_norm;
    Conv merge;
    std::vector<Block> blocks;
  };

  Var run_block(const Block& b, const Var& x) const;

  DiscriminatorConfig cfg_;
  ParamStore params_;
  Conv embed_;
  Norm embed_norm_;
  std::vector<Stage> stages_;
  Norm head_norm_;
  Conv head_;
};

}  // namespace catintell
