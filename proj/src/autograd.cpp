#include "catintell/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "catintell/error.hpp"

namespace catintell {

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return node;
}

Var parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return node;
}

void backward(const Var& loss) {
  if (loss->value.size() != 1) fail(ErrorKind::ShapeError, "backward() needs a scalar loss");
  if (!loss->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss->grad_buffer().data()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

namespace ag {

namespace {

Var make_node(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  const bool needs = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                 [](const Var& v) { return v && v->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward_fn = std::move(fn);
  }
  return node;
}

bool wants(const Var& v) { return v && v->requires_grad; }

void require_same(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) fail(ErrorKind::ShapeError, std::string(what) + ": " + a.str() + " vs " + b.str());
}

Tensor scalar(double v) { return Tensor(Shape{1, 1, 1, 1}, v); }

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, ConvOptions opt) {
  const Shape xs = x->shape();
  const Shape ws = weight->shape();
  ConvGeometry g;
  g.batch = xs.n;
  g.in_channels = xs.c;
  g.in_h = xs.h;
  g.in_w = xs.w;
  g.out_channels = ws.n;
  g.kernel_h = ws.h;
  g.kernel_w = ws.w;
  g.stride = opt.stride;
  g.pad = opt.pad;
  g.groups = opt.groups;
  g.validate();
  if (ws.c != g.in_per_group()) {
    fail(ErrorKind::ShapeError, "conv weight " + ws.str() + " does not fit input " + xs.str());
  }
  if (bias && static_cast<int>(bias->value.size()) != g.out_channels) {
    fail(ErrorKind::ShapeError, "conv bias size mismatch");
  }
  Tensor out(Shape{g.batch, g.out_channels, g.out_h(), g.out_w()});
  kernels::conv2d_forward(g, x->value.raw(), weight->value.raw(), bias ? bias->value.raw() : nullptr,
                          out.raw());
  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(bias);
  return make_node(std::move(out), std::move(inputs), [g](Node& self) {
    const Var& in = self.inputs[0];
    const Var& w = self.inputs[1];
    const Var b = self.inputs.size() > 2 ? self.inputs[2] : nullptr;
    if (wants(in)) kernels::conv2d_backward_input(g, self.grad.raw(), w->value.raw(), in->grad_buffer().raw());
    if (wants(w) || wants(b)) {
      kernels::conv2d_backward_weight(g, self.grad.raw(), in->value.raw(),
                                      wants(w) ? w->grad_buffer().raw() : nullptr,
                                      wants(b) ? b->grad_buffer().raw() : nullptr);
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same(a->shape(), b->shape(), "add");
  Tensor out = a->value;
  out.accumulate(b->value);
  return make_node(std::move(out), {a, b}, [](Node& self) {
    for (const Var& in : self.inputs) {
      if (wants(in)) in->grad_buffer().accumulate(self.grad);
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a->value;
  for (double& v : out.data()) v *= factor;
  return make_node(std::move(out), {a}, [factor](Node& self) {
    auto dst = self.inputs[0]->grad_buffer().data();
    auto src = self.grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Shape s = x->shape();
  const int pixels = s.h * s.w;
  if (static_cast<int>(gamma->value.size()) != s.c || static_cast<int>(beta->value.size()) != s.c) {
    fail(ErrorKind::ShapeError, "layer_norm affine size mismatch for " + s.str());
  }
  Tensor out(s);
  auto stats = std::make_shared<std::pair<std::vector<double>, std::vector<double>>>();
  stats->first.resize(static_cast<std::size_t>(s.n) * pixels);
  stats->second.resize(stats->first.size());
  kernels::layer_norm_forward(s.n, s.c, pixels, x->value.raw(), gamma->value.raw(), beta->value.raw(),
                              eps, out.raw(), stats->first.data(), stats->second.data());
  return make_node(std::move(out), {x, gamma, beta}, [s, pixels, stats](Node& self) {
    const Var& in = self.inputs[0];
    const Var& g = self.inputs[1];
    const Var& b = self.inputs[2];
    kernels::layer_norm_backward(s.n, s.c, pixels, in->value.raw(), g->value.raw(), stats->first.data(),
                                 stats->second.data(), self.grad.raw(),
                                 wants(in) ? in->grad_buffer().raw() : nullptr,
                                 wants(g) ? g->grad_buffer().raw() : nullptr,
                                 wants(b) ? b->grad_buffer().raw() : nullptr);
  });
}

Var gelu(const Var& x) {
  Tensor out(x->shape());
  kernels::gelu_forward(out.size(), x->value.raw(), out.raw());
  return make_node(std::move(out), {x}, [](Node& self) {
    const Var& in = self.inputs[0];
    kernels::gelu_backward(in->value.size(), in->value.raw(), self.grad.raw(), in->grad_buffer().raw());
  });
}

Var relu(const Var& x) {
  Tensor out = x->value;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return make_node(std::move(out), {x}, [](Node& self) {
    const Var& in = self.inputs[0];
    auto dst = in->grad_buffer().data();
    auto src = self.grad.data();
    auto val = in->value.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (val[i] > 0.0) dst[i] += src[i];
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x->value;
  for (double& v : out.data()) {
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return make_node(std::move(out), {x}, [](Node& self) {
    auto dst = self.inputs[0]->grad_buffer().data();
    auto src = self.grad.data();
    auto p = self.value.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i] * p[i] * (1.0 - p[i]);
  });
}

Var upsample_nearest2(const Var& x) {
  const Shape s = x->shape();
  Tensor out(Shape{s.n, s.c, s.h * 2, s.w * 2});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* src = x->value.plane(n, c);
      double* dst = out.plane(n, c);
      for (int y = 0; y < 2 * s.h; ++y) {
        const double* srow = src + static_cast<std::size_t>(y / 2) * s.w;
        double* drow = dst + static_cast<std::size_t>(y) * 2 * s.w;
        for (int xx = 0; xx < 2 * s.w; ++xx) drow[xx] = srow[xx / 2];
      }
    }
  }
  return make_node(std::move(out), {x}, [s](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const double* src = self.grad.plane(n, c);
        double* dst = g.plane(n, c);
        for (int y = 0; y < 2 * s.h; ++y) {
          const double* srow = src + static_cast<std::size_t>(y) * 2 * s.w;
          double* drow = dst + static_cast<std::size_t>(y / 2) * s.w;
          for (int xx = 0; xx < 2 * s.w; ++xx) drow[xx / 2] += srow[xx];
        }
      }
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Shape sa = a->shape();
  const Shape sb = b->shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    fail(ErrorKind::ShapeError, "concat_channels " + sa.str() + " with " + sb.str());
  }
  Tensor out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t plane = sa.plane();
  for (int n = 0; n < sa.n; ++n) {
    std::copy(a->value.plane(n, 0), a->value.plane(n, 0) + sa.c * plane, out.plane(n, 0));
    std::copy(b->value.plane(n, 0), b->value.plane(n, 0) + sb.c * plane, out.plane(n, sa.c));
  }
  return make_node(std::move(out), {a, b}, [sa, sb, plane](Node& self) {
    const Var& ia = self.inputs[0];
    const Var& ib = self.inputs[1];
    for (int n = 0; n < sa.n; ++n) {
      if (wants(ia)) {
        const double* src = self.grad.plane(n, 0);
        double* dst = ia->grad_buffer().plane(n, 0);
        for (std::size_t i = 0; i < sa.c * plane; ++i) dst[i] += src[i];
      }
      if (wants(ib)) {
        const double* src = self.grad.plane(n, sa.c);
        double* dst = ib->grad_buffer().plane(n, 0);
        for (std::size_t i = 0; i < sb.c * plane; ++i) dst[i] += src[i];
      }
    }
  });
}

Var pad_reflect(const Var& x, int top, int bottom, int left, int right) {
  const Shape s = x->shape();
  if (top < 0 || bottom < 0 || left < 0 || right < 0) fail(ErrorKind::RangeError, "negative padding");
  const int oh = s.h + top + bottom;
  const int ow = s.w + left + right;
  std::vector<int> ry(oh), rx(ow);
  for (int y = 0; y < oh; ++y) ry[y] = reflect_index(y - top, s.h);
  for (int xx = 0; xx < ow; ++xx) rx[xx] = reflect_index(xx - left, s.w);
  Tensor out(Shape{s.n, s.c, oh, ow});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* src = x->value.plane(n, c);
      double* dst = out.plane(n, c);
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) dst[y * ow + xx] = src[ry[y] * s.w + rx[xx]];
      }
    }
  }
  return make_node(std::move(out), {x}, [s, oh, ow, ry, rx](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const double* src = self.grad.plane(n, c);
        double* dst = g.plane(n, c);
        for (int y = 0; y < oh; ++y) {
          for (int xx = 0; xx < ow; ++xx) dst[ry[y] * s.w + rx[xx]] += src[y * ow + xx];
        }
      }
    }
  });
}

Var pad_zero(const Var& x, int bottom, int right) {
  const Shape s = x->shape();
  if (bottom < 0 || right < 0) fail(ErrorKind::RangeError, "negative padding");
  const int oh = s.h + bottom;
  const int ow = s.w + right;
  Tensor out(Shape{s.n, s.c, oh, ow});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < s.h; ++y) {
        std::copy(x->value.plane(n, c) + y * s.w, x->value.plane(n, c) + (y + 1) * s.w,
                  out.plane(n, c) + y * ow);
      }
    }
  }
  return make_node(std::move(out), {x}, [s, ow](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        for (int y = 0; y < s.h; ++y) {
          const double* src = self.grad.plane(n, c) + y * ow;
          double* dst = g.plane(n, c) + y * s.w;
          for (int xx = 0; xx < s.w; ++xx) dst[xx] += src[xx];
        }
      }
    }
  });
}

Var crop(const Var& x, int top, int left, int height, int width) {
  const Shape s = x->shape();
  if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > s.h || left + width > s.w) {
    fail(ErrorKind::RangeError, "crop window outside " + s.str());
  }
  Tensor out(Shape{s.n, s.c, height, width});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < height; ++y) {
        const double* src = x->value.plane(n, c) + (top + y) * s.w + left;
        std::copy(src, src + width, out.plane(n, c) + y * width);
      }
    }
  }
  return make_node(std::move(out), {x}, [s, top, left, height, width](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        for (int y = 0; y < height; ++y) {
          const double* src = self.grad.plane(n, c) + y * width;
          double* dst = g.plane(n, c) + (top + y) * s.w + left;
          for (int xx = 0; xx < width; ++xx) dst[xx] += src[xx];
        }
      }
    }
  });
}

Var window_attention(const Var& qkv, const Var& bias_table, WindowOptions opt) {
  const Shape s = qkv->shape();
  if (s.c % 3 != 0) fail(ErrorKind::ShapeError, "qkv channels must be a multiple of 3");
  AttentionGeometry g;
  g.batch = s.n;
  g.channels = s.c / 3;
  g.height = s.h;
  g.width = s.w;
  g.heads = opt.heads;
  g.window = opt.window;
  g.table_window = opt.table_window;
  g.shift = opt.shift;
  g.validate();
  const std::size_t expected = static_cast<std::size_t>(g.heads) * g.table_side() * g.table_side();
  if (bias_table->value.size() != expected) fail(ErrorKind::ShapeError, "attention bias table size mismatch");
  Tensor out(Shape{s.n, g.channels, s.h, s.w});
  auto probs = std::make_shared<std::vector<double>>(g.probs_count());
  kernels::window_attention_forward(g, qkv->value.raw(), bias_table->value.raw(), out.raw(), probs->data());
  return make_node(std::move(out), {qkv, bias_table}, [g, probs](Node& self) {
    const Var& in = self.inputs[0];
    const Var& table = self.inputs[1];
    kernels::window_attention_backward(g, in->value.raw(), table->value.raw(), probs->data(), self.grad.raw(),
                                       wants(in) ? in->grad_buffer().raw() : nullptr,
                                       wants(table) ? table->grad_buffer().raw() : nullptr);
  });
}

Var global_avg_pool(const Var& x) {
  const Shape s = x->shape();
  Tensor out(Shape{s.n, s.c, 1, 1});
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* src = x->value.plane(n, c);
      double acc = 0.0;
      for (std::size_t p = 0; p < plane; ++p) acc += src[p];
      out.at(n, c, 0, 0) = acc / static_cast<double>(plane);
    }
  }
  return make_node(std::move(out), {x}, [s, plane](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const double d = self.grad.at(n, c, 0, 0) / static_cast<double>(plane);
        double* dst = g.plane(n, c);
        for (std::size_t p = 0; p < plane; ++p) dst[p] += d;
      }
    }
  });
}

Var gram(const Var& x) {
  const Shape s = x->shape();
  const int pixels = s.h * s.w;
  const double norm = 1.0 / pixels;
  Tensor out(Shape{s.n, 1, s.c, s.c});
  for (int n = 0; n < s.n; ++n) {
    for (int a = 0; a < s.c; ++a) {
      const double* fa = x->value.plane(n, a);
      for (int b = a; b < s.c; ++b) {
        const double* fb = x->value.plane(n, b);
        double acc = 0.0;
#pragma omp simd reduction(+ : acc)
        for (int p = 0; p < pixels; ++p) acc += fa[p] * fb[p];
        out.at(n, 0, a, b) = acc * norm;
        out.at(n, 0, b, a) = acc * norm;
      }
    }
  }
  return make_node(std::move(out), {x}, [s, pixels, norm](Node& self) {
    const Var& in = self.inputs[0];
    Tensor& g = in->grad_buffer();
    // dF_a = sum_b (dG_ab + dG_ba) F_b / (H W)
    for (int n = 0; n < s.n; ++n) {
      for (int a = 0; a < s.c; ++a) {
        double* dst = g.plane(n, a);
        for (int b = 0; b < s.c; ++b) {
          const double coef = (self.grad.at(n, 0, a, b) + self.grad.at(n, 0, b, a)) * norm;
          if (coef == 0.0) continue;
          const double* fb = in->value.plane(n, b);
#pragma omp simd
          for (int p = 0; p < pixels; ++p) dst[p] += coef * fb[p];
        }
      }
    }
  });
}

Var detach(const Var& x) { return constant(x->value); }

Var smooth_l1(const Var& a, const Var& b) {
  require_same(a->shape(), b->shape(), "smooth_l1");
  auto va = a->value.data();
  auto vb = b->value.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = va[i] - vb[i];
    const double ad = std::abs(d);
    acc += ad < 1.0 ? 0.5 * d * d : ad - 0.5;
  }
  const double count = static_cast<double>(va.size());
  return make_node(scalar(acc / count), {a, b}, [count](Node& self) {
    const Var& ia = self.inputs[0];
    const Var& ib = self.inputs[1];
    const double up = self.grad.item() / count;
    auto xa = ia->value.data();
    auto xb = ib->value.data();
    std::span<double> ga = wants(ia) ? ia->grad_buffer().data() : std::span<double>{};
    std::span<double> gb = wants(ib) ? ib->grad_buffer().data() : std::span<double>{};
    for (std::size_t i = 0; i < xa.size(); ++i) {
      const double d = xa[i] - xb[i];
      const double slope = std::abs(d) < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0);
      if (!ga.empty()) ga[i] += up * slope;
      if (!gb.empty()) gb[i] -= up * slope;
    }
  });
}

Var squared_error(const Var& a, const Var& b, double factor) {
  require_same(a->shape(), b->shape(), "squared_error");
  auto va = a->value.data();
  auto vb = b->value.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = va[i] - vb[i];
    acc += d * d;
  }
  return make_node(scalar(acc * factor), {a, b}, [factor](Node& self) {
    const Var& ia = self.inputs[0];
    const Var& ib = self.inputs[1];
    const double up = 2.0 * factor * self.grad.item();
    auto xa = ia->value.data();
    auto xb = ib->value.data();
    std::span<double> ga = wants(ia) ? ia->grad_buffer().data() : std::span<double>{};
    std::span<double> gb = wants(ib) ? ib->grad_buffer().data() : std::span<double>{};
    for (std::size_t i = 0; i < xa.size(); ++i) {
      const double d = up * (xa[i] - xb[i]);
      if (!ga.empty()) ga[i] += d;
      if (!gb.empty()) gb[i] -= d;
    }
  });
}

Var bce(const Tensor& target, const Var& prob, double eps) {
  if (target.size() != prob->value.size()) fail(ErrorKind::ShapeError, "bce target/prob size mismatch");
  auto t = target.data();
  auto p = prob->value.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(p[i], eps, 1.0 - eps);
    acc -= t[i] * std::log(pc) + (1.0 - t[i]) * std::log(1.0 - pc);
  }
  const double count = static_cast<double>(p.size());
  return make_node(scalar(acc / count), {prob}, [target, eps, count](Node& self) {
    const Var& in = self.inputs[0];
    const double up = self.grad.item() / count;
    auto g = in->grad_buffer().data();
    auto pv = in->value.data();
    auto tv = target.data();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      if (pv[i] < eps || pv[i] > 1.0 - eps) continue;
      g[i] += up * (-(tv[i] / pv[i]) + (1.0 - tv[i]) / (1.0 - pv[i]));
    }
  });
}

Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels) {
  const Shape s = logits->shape();
  const int classes = s.c * s.h * s.w;
  if (static_cast<int>(labels.size()) != s.n) fail(ErrorKind::ShapeError, "label count mismatch");
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(s.n) * classes);
  double acc = 0.0;
  auto z = logits->value.data();
  for (int n = 0; n < s.n; ++n) {
    if (labels[n] < 0 || labels[n] >= classes) fail(ErrorKind::RangeError, "label out of range");
    const double* zn = z.data() + static_cast<std::size_t>(n) * classes;
    double mx = *std::max_element(zn, zn + classes);
    double total = 0.0;
    for (int k = 0; k < classes; ++k) total += std::exp(zn[k] - mx);
    for (int k = 0; k < classes; ++k) (*probs)[static_cast<std::size_t>(n) * classes + k] = std::exp(zn[k] - mx) / total;
    acc -= zn[labels[n]] - mx - std::log(total);
  }
  return make_node(scalar(acc / s.n), {logits}, [labels, probs, classes, s](Node& self) {
    auto g = self.inputs[0]->grad_buffer().data();
    const double up = self.grad.item() / s.n;
    for (int n = 0; n < s.n; ++n) {
      for (int k = 0; k < classes; ++k) {
        const std::size_t at = static_cast<std::size_t>(n) * classes + k;
        g[at] += up * ((*probs)[at] - (k == labels[n] ? 1.0 : 0.0));
      }
    }
  });
}

Var weighted_sum(const std::vector<std::pair<double, Var>>& terms) {
  double acc = 0.0;
  std::vector<Var> inputs;
  std::vector<double> weights;
  for (const auto& [w, v] : terms) {
    if (v->value.size() != 1) fail(ErrorKind::ShapeError, "weighted_sum expects scalars");
    acc += w * v->value.item();
    inputs.push_back(v);
    weights.push_back(w);
  }
  return make_node(scalar(acc), std::move(inputs), [weights](Node& self) {
    const double up = self.grad.item();
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      if (wants(self.inputs[i])) self.inputs[i]->grad_buffer().data()[0] += weights[i] * up;
    }
  });
}

}  // namespace ag

}  // namespace catintell
