#include "catintell/discriminator.hpp"

#include <algorithm>
#include <string>

#include "catintell/error.hpp"

namespace catintell {

DiscriminatorConfig DiscriminatorConfig::res() { return DiscriminatorConfig{}; }

DiscriminatorConfig DiscriminatorConfig::syn() {
  DiscriminatorConfig c;
  c.embed_dim = 16;
  return c;
}

void DiscriminatorConfig::validate() const {
  if (stages < 1 || embed_dim < 1 || window < 1 || patch < 1 || blocks_per_stage < 1 || mlp_ratio < 1) {
    fail(ErrorKind::ConfigError, "discriminator sizes must be positive");
  }
  if (static_cast<int>(heads.size()) != stages) {
    fail(ErrorKind::ConfigError, "discriminator needs one head count per stage");
  }
  for (int s = 0; s < stages; ++s) {
    const int ch = embed_dim << s;
    if (heads[s] < 1 || ch % heads[s] != 0) {
      fail(ErrorKind::ConfigError, "stage " + std::to_string(s) + ": " + std::to_string(heads[s]) +
                                       " heads do not divide " + std::to_string(ch) + " channels");
    }
  }
}

Discriminator::Discriminator(const DiscriminatorConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  int ch = cfg_.embed_dim;
  embed_ = make_conv(params_, "embed", 3, ch, cfg_.patch, cfg_.patch, 0, 1, true, rng);
  embed_norm_ = make_norm(params_, "embed_norm", ch);
  const int side = 2 * cfg_.window - 1;
  for (int s = 0; s < cfg_.stages; ++s) {
    const std::string sname = "stage" + std::to_string(s);
    Stage st;
    if (s > 0) {
      st.merge_norm = make_norm(params_, sname + ".merge_norm", ch);
      st.merge = make_conv(params_, sname + ".merge", ch, 2 * ch, 2, 2, 0, 1, true, rng);
      ch *= 2;
    }
    for (int b = 0; b < cfg_.blocks_per_stage; ++b) {
      const std::string name = sname + ".block" + std::to_string(b);
      Block blk;
      blk.heads = cfg_.heads[s];
      blk.shifted = b % 2 == 1;
      blk.attn_norm = make_norm(params_, name + ".attn_norm", ch);
      blk.qkv = make_conv(params_, name + ".qkv", ch, 3 * ch, 1, 1, 0, 1, true, rng);
      blk.rel_bias = params_.add(name + ".rel_bias", uniform_tensor(Shape{1, blk.heads, side, side}, 0.02, rng));
      blk.proj = make_conv(params_, name + ".proj", ch, ch, 1, 1, 0, 1, true, rng);
      blk.mlp_norm = make_norm(params_, name + ".mlp_norm", ch);
      blk.fc1 = make_conv(params_, name + ".fc1", ch, cfg_.mlp_ratio * ch, 1, 1, 0, 1, true, rng);
      blk.fc2 = make_conv(params_, name + ".fc2", cfg_.mlp_ratio * ch, ch, 1, 1, 0, 1, true, rng);
      st.blocks.push_back(std::move(blk));
    }
    stages_.push_back(std::move(st));
  }
  head_norm_ = make_norm(params_, "head_norm", ch);
  head_ = make_conv(params_, "head", ch, 1, 1, 1, 0, 1, true, rng);
  if (cfg_.zero_init_head) {
    head_.weight->value.fill(0.0);
    head_.bias->value.fill(0.0);
  }
}

Var Discriminator::run_block(const Block& b, const Var& x) const {
  const Shape s = x->shape();
  const int window = std::min({cfg_.window, s.h, s.w});
  const int ph = (s.h + window - 1) / window * window;
  const int pw = (s.w + window - 1) / window * window;
  // A grid that fits in one window has nothing to exchange across windows.
  const int shift = (b.shifted && (ph > window || pw > window)) ? window / 2 : 0;

  Var h = b.attn_norm(x);
  if (ph != s.h || pw != s.w) h = ag::pad_zero(h, ph - s.h, pw - s.w);
  h = ag::window_attention(b.qkv(h), b.rel_bias, {b.heads, window, cfg_.window, shift});
  if (ph != s.h || pw != s.w) h = ag::crop(h, 0, 0, s.h, s.w);
  Var y = ag::add(x, b.proj(h));
  Var m = b.fc2(ag::gelu(b.fc1(b.mlp_norm(y))));
  return ag::add(y, m);
}

Var Discriminator::forward(const Var& x) const {
  const Shape s = x->shape();
  if (s.c != 3) fail(ErrorKind::ShapeError, "discriminator expects 3 channels, got " + s.str());
  const int ph = (s.h + cfg_.patch - 1) / cfg_.patch * cfg_.patch;
  const int pw = (s.w + cfg_.patch - 1) / cfg_.patch * cfg_.patch;
  Var h = (ph != s.h || pw != s.w) ? ag::pad_zero(x, ph - s.h, pw - s.w) : x;
  h = embed_norm_(embed_(h));
  for (std::size_t si = 0; si < stages_.size(); ++si) {
    const Stage& st = stages_[si];
    if (si > 0) {
      const Shape hs = h->shape();
      Var m = st.merge_norm(h);
      if (hs.h % 2 != 0 || hs.w % 2 != 0) m = ag::pad_zero(m, hs.h % 2, hs.w % 2);
      h = st.merge(m);
    }
    for (const Block& b : st.blocks) h = run_block(b, h);
  }
  h = ag::global_avg_pool(head_norm_(h));
  return ag::sigmoid(head_(h));
}

std::vector<double> Discriminator::predict(const Tensor& x) const {
  NoGradGuard guard;
  Var p = forward(constant(x));
  return {p->value.data().begin(), p->value.data().end()};
}

}  // namespace catintell
