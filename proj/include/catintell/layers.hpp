#pragma once

#include <string>

#include "catintell/autograd.hpp"
#include "catintell/nn.hpp"

namespace catintell {

struct Conv {
  Var weight;
  Var bias;
  ag::ConvOptions opt;

  Var operator()(const Var& x) const { return ag::conv2d(x, weight, bias, opt); }
};

// Registers `name.weight` (and `name.bias`) with fan-in uniform init;
// fan_in 0 means the conv's own receptive field.
Conv make_conv(ParamStore& store, const std::string& name, int in_ch, int out_ch, int kernel, int stride,
               int pad, int groups, bool bias, Rng& rng, int fan_in = 0);

struct Norm {
  Var gamma;
  Var beta;

  Var operator()(const Var& x) const { return ag::layer_norm(x, gamma, beta); }
};

Norm make_norm(ParamStore& store, const std::string& name, int channels);

}  // namespace catintell
