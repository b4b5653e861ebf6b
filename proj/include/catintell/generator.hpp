#pragma once

#include <vector>

#include "catintell/autograd.hpp"
#include "catintell/layers.hpp"
#include "catintell/nn.hpp"

namespace catintell {

struct GeneratorConfig {
  int stages = 4;
  int width = 32;
  int encoder_blocks = 3;
  int decoder_blocks = 1;
  int bottleneck_blocks = 3;
  int kernel = 5;
  // 0 selects depthwise (one group per channel) at every width.
  int conv_groups = 0;
  bool global_residual = true;
  int io_channels = 3;

  static GeneratorConfig res();
  static GeneratorConfig syn();
  void validate() const;
  int groups_at(int channels) const { return conv_groups == 0 ? channels : conv_groups; }
};

// 5x5 grouped conv -> LayerNorm -> 1x1 (x4) -> GELU -> 1x1, then a second
// 5x5 conv over [block input, branch output] mapping 2C -> C. The second conv
// is stored as one grouped conv per half, which is the same map as a grouped
// conv on the interleaved concatenation.
struct DenseConvBlock {
  Conv spatial;
  Norm norm;
  Conv expand;
  Conv contract;
  Conv dense_input;
  Conv dense_branch;

  Var operator()(const Var& x) const;
};

DenseConvBlock make_dense_block(ParamStore& store, const std::string& name, int channels, int kernel, int groups,
                                Rng& rng);

class Generator {
 public:
  Generator(const GeneratorConfig& cfg, Rng& rng);

  const GeneratorConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::size_t parameter_count() const { return params_.scalar_count(); }

  // Unclamped output with the same shape as x; differentiable.
  Var forward(const Var& x) const;
  // Per-stage downsampled features X_0 .. X_{stages-1}.
  std::vector<Tensor> encoder_trace(const Tensor& x) const;
  // Gradient-free forward with the output clamped to [0, 1].
  Tensor infer(const Tensor& x) const;

 private:
  struct Stage {
    std::vector<DenseConvBlock> blocks;
    Conv down;
  };
  struct UpStage {
    Conv up;
    Conv merge;
    std::vector<DenseConvBlock> blocks;
  };

  Var encode(const Var& x, std::vector<Var>* skips, std::vector<Var>* features) const;

  GeneratorConfig cfg_;
  ParamStore params_;
  Conv in_proj_;
  std::vector<Stage> encoder_;
  std::vector<DenseConvBlock> bottleneck_;
  std::vector<UpStage> decoder_;
  Conv out_proj_;
};

}  // namespace catintell
