#pragma once

#include <functional>
#include <string>

#include "catintell/autograd.hpp"
#include "catintell/tensor.hpp"

namespace catintell {

constexpr double kBceEps = 1e-7;

struct LossWeights {
  double pixel = 1.0;
  double fp = 0.1;
  double identity = 0.01;
  double gan = 0.1;
  // Multiplier on the Gram term inside the fp weight.
  double style = 1.0;

  static LossWeights syn();
  static LossWeights res();
  static LossWeights preset(const std::string& name);
};

struct LossReport {
  double pixel = 0.0;
  double fp = 0.0;
  double fp_style = 0.0;
  double identity = 0.0;
  double gan = 0.0;
  double total = 0.0;
};

// Mean of 0.5 d^2 for |d| < 1 and |d| - 0.5 otherwise.
double smooth_l1(const Tensor& a, const Tensor& b);
// smooth_l1(img, gen(img)) for any image-to-image map.
double identity_loss(const std::function<Tensor(const Tensor&)>& gen, const Tensor& img);
// Mean binary cross-entropy with p_out clamped to [eps, 1 - eps].
double gan_bce(const Tensor& p_target, const Tensor& p_out);

// Fills `total` from the components; a non-finite component is a NumericalError.
LossReport composite(LossReport components, const LossWeights& w);

}  // namespace catintell
