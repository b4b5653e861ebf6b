#include "catintell/generator.hpp"

#include <algorithm>
#include <string>

#include "catintell/error.hpp"

namespace catintell {

GeneratorConfig GeneratorConfig::res() { return GeneratorConfig{}; }

GeneratorConfig GeneratorConfig::syn() {
  GeneratorConfig c;
  c.stages = 3;
  c.width = 16;
  return c;
}

void GeneratorConfig::validate() const {
  if (stages < 1 || width < 1 || encoder_blocks < 1 || decoder_blocks < 1 || bottleneck_blocks < 1) {
    fail(ErrorKind::ConfigError, "generator stages, width and block counts must be positive");
  }
  if (kernel < 1 || kernel % 2 == 0) fail(ErrorKind::ConfigError, "generator kernel must be odd");
  if (conv_groups < 0 || (conv_groups > 0 && width % conv_groups != 0)) {
    fail(ErrorKind::ConfigError, "width " + std::to_string(width) + " not divisible by conv_groups " +
                                     std::to_string(conv_groups));
  }
  if (io_channels != 3) fail(ErrorKind::ConfigError, "generator works on 3-channel images");
  if (stages > 12) fail(ErrorKind::ConfigError, "too many generator stages");
}

Var DenseConvBlock::operator()(const Var& x) const {
  Var y = spatial(x);
  y = norm(y);
  y = expand(y);
  y = ag::gelu(y);
  y = contract(y);
  return ag::add(dense_input(x), dense_branch(y));
}

DenseConvBlock make_dense_block(ParamStore& store, const std::string& name, int channels, int kernel, int groups,
                                Rng& rng) {
  const int pad = kernel / 2;
  DenseConvBlock b;
  b.spatial = make_conv(store, name + ".spatial", channels, channels, kernel, 1, pad, groups, true, rng);
  b.norm = make_norm(store, name + ".norm", channels);
  b.expand = make_conv(store, name + ".expand", channels, 4 * channels, 1, 1, 0, 1, true, rng);
  b.contract = make_conv(store, name + ".contract", 4 * channels, channels, 1, 1, 0, 1, true, rng);
  // The pair acts as one 2C -> C conv, so both halves share its fan-in.
  const int fan_in = 2 * (channels / groups) * kernel * kernel;
  b.dense_input =
      make_conv(store, name + ".dense_input", channels, channels, kernel, 1, pad, groups, true, rng, fan_in);
  b.dense_branch =
      make_conv(store, name + ".dense_branch", channels, channels, kernel, 1, pad, groups, false, rng, fan_in);
  return b;
}

Generator::Generator(const GeneratorConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int k = cfg_.kernel;
  const int c0 = cfg_.width;
  in_proj_ = make_conv(params_, "in_proj", cfg_.io_channels, c0, k, 1, k / 2, 1, true, rng);
  int c = c0;
  for (int i = 0; i < cfg_.stages; ++i) {
    Stage st;
    for (int j = 0; j < cfg_.encoder_blocks; ++j) {
      st.blocks.push_back(make_dense_block(params_, "enc" + std::to_string(i) + ".block" + std::to_string(j), c, k,
                                           cfg_.groups_at(c), rng));
    }
    st.down = make_conv(params_, "enc" + std::to_string(i) + ".down", c, 2 * c, 2, 2, 0, 1, true, rng);
    encoder_.push_back(std::move(st));
    c *= 2;
  }
  for (int j = 0; j < cfg_.bottleneck_blocks; ++j) {
    bottleneck_.push_back(make_dense_block(params_, "mid.block" + std::to_string(j), c, k, cfg_.groups_at(c), rng));
  }
  for (int i = cfg_.stages - 1; i >= 0; --i) {
    const int half = c / 2;
    const std::string name = "dec" + std::to_string(i);
    UpStage st;
    st.up = make_conv(params_, name + ".up", c, half, 3, 1, 1, 1, true, rng);
    st.merge = make_conv(params_, name + ".merge", 2 * half, half, 1, 1, 0, 1, true, rng);
    for (int j = 0; j < cfg_.decoder_blocks; ++j) {
      st.blocks.push_back(
          make_dense_block(params_, name + ".block" + std::to_string(j), half, k, cfg_.groups_at(half), rng));
    }
    decoder_.push_back(std::move(st));
    c = half;
  }
  out_proj_ = make_conv(params_, "out_proj", c0, cfg_.io_channels, k, 1, k / 2, 1, true, rng);
}

Var Generator::encode(const Var& x, std::vector<Var>* skips, std::vector<Var>* features) const {
  Var h = in_proj_(x);
  for (const Stage& st : encoder_) {
    Var y = h;
    for (const auto& b : st.blocks) y = b(y);
    h = ag::add(h, y);
    if (skips) skips->push_back(h);
    h = st.down(h);
    if (features) features->push_back(h);
  }
  return h;
}

namespace {

void check_input(const Shape& s) {
  if (s.c != 3) fail(ErrorKind::ShapeError, "generator expects 3 channels, got " + s.str());
  if (s.h < 1 || s.w < 1) fail(ErrorKind::ShapeError, "empty generator input");
}

int padded(int v, int multiple) { return (v + multiple - 1) / multiple * multiple; }

}  // namespace

Var Generator::forward(const Var& x) const {
  const Shape s = x->shape();
  check_input(s);
  const int multiple = 1 << cfg_.stages;
  const int ph = padded(s.h, multiple);
  const int pw = padded(s.w, multiple);
  Var in = (ph != s.h || pw != s.w) ? ag::pad_reflect(x, 0, ph - s.h, 0, pw - s.w) : x;

  std::vector<Var> skips;
  Var h = encode(in, &skips, nullptr);
  for (const auto& b : bottleneck_) h = b(h);
  for (std::size_t d = 0; d < decoder_.size(); ++d) {
    const UpStage& st = decoder_[d];
    h = st.up(ag::upsample_nearest2(h));
    h = st.merge(ag::concat_channels(h, skips[skips.size() - 1 - d]));
    for (const auto& b : st.blocks) h = b(h);
  }
  Var out = out_proj_(h);
  if (cfg_.global_residual) out = ag::add(out, in);
  if (ph != s.h || pw != s.w) out = ag::crop(out, 0, 0, s.h, s.w);
  return out;
}

std::vector<Tensor> Generator::encoder_trace(const Tensor& x) const {
  check_input(x.shape());
  const int multiple = 1 << cfg_.stages;
  if (x.shape().h % multiple != 0 || x.shape().w % multiple != 0) {
    fail(ErrorKind::ShapeError, "encoder_trace needs sides divisible by " + std::to_string(multiple));
  }
  NoGradGuard guard;
  std::vector<Var> features;
  encode(constant(x), nullptr, &features);
  std::vector<Tensor> out;
  for (const Var& f : features) out.push_back(f->value);
  return out;
}

Tensor Generator::infer(const Tensor& x) const {
  NoGradGuard guard;
  Tensor out = forward(constant(x))->value;
  for (double& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace catintell
