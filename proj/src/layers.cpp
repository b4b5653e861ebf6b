#include "catintell/layers.hpp"

namespace catintell {

Conv make_conv(ParamStore& store, const std::string& name, int in_ch, int out_ch, int kernel, int stride,
               int pad, int groups, bool bias, Rng& rng, int fan_in) {
  if (fan_in == 0) fan_in = in_ch / groups * kernel * kernel;
  Conv c;
  c.weight = store.add(name + ".weight", fan_in_uniform(Shape{out_ch, in_ch / groups, kernel, kernel}, fan_in, rng));
  if (bias) c.bias = store.add(name + ".bias", fan_in_uniform(Shape{1, out_ch, 1, 1}, fan_in, rng));
  c.opt = {stride, pad, groups};
  return c;
}

Norm make_norm(ParamStore& store, const std::string& name, int channels) {
  return {store.add(name + ".gamma", Tensor(Shape{1, channels, 1, 1}, 1.0)),
          store.add(name + ".beta", Tensor(Shape{1, channels, 1, 1}, 0.0))};
}

}  // namespace catintell
