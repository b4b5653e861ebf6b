#include "catintell/losses.hpp"

#include <algorithm>
#include <cmath>

#include "catintell/error.hpp"

namespace catintell {

LossWeights LossWeights::syn() { return {0.01, 1.0, 0.1, 0.1}; }
LossWeights LossWeights::res() { return {1.0, 0.1, 0.01, 0.1}; }

LossWeights LossWeights::preset(const std::string& name) {
  if (name == "syn") return syn();
  if (name == "res") return res();
  fail(ErrorKind::ConfigError, "unknown loss preset '" + name + "'");
}

double smooth_l1(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) fail(ErrorKind::ShapeError, "smooth_l1 shapes differ");
  NoGradGuard guard;
  return ag::smooth_l1(constant(a), constant(b))->value.item();
}

double identity_loss(const std::function<Tensor(const Tensor&)>& gen, const Tensor& img) {
  return smooth_l1(img, gen(img));
}

double gan_bce(const Tensor& p_target, const Tensor& p_out) {
  NoGradGuard guard;
  return ag::bce(p_target, constant(p_out), kBceEps)->value.item();
}

LossReport composite(LossReport c, const LossWeights& w) {
  for (double v : {c.pixel, c.fp, c.fp_style, c.identity, c.gan}) {
    if (!std::isfinite(v)) fail(ErrorKind::NumericalError, "non-finite loss component");
  }
  c.total = w.pixel * c.pixel + w.fp * (c.fp + w.style * c.fp_style) + w.identity * c.identity + w.gan * c.gan;
  return c;
}

}  // namespace catintell
