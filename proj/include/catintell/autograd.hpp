#pragma once

// Minimal reverse-mode differentiation over NCHW tensors. A forward pass
// builds a graph of Nodes only when some input requires a gradient; calling
// backward() on a scalar walks that graph in reverse topological order.

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "catintell/kernels.hpp"
#include "catintell/tensor.hpp"

namespace catintell {

class Node;
using Var = std::shared_ptr<Node>;

class Node {
 public:
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<Var> inputs;
  std::function<void(Node&)> backward_fn;

  // Gradient storage, zero-initialized on first use.
  Tensor& grad_buffer();
  void zero_grad() { grad = Tensor(); }
  const Shape& shape() const { return value.shape(); }
};

Var constant(Tensor value);
Var parameter(Tensor value);

// While alive on a thread, ops on that thread record no graph, so
// intermediate values are freed as soon as they go out of scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Seeds d(loss)/d(loss) = 1 and propagates into every reachable node that
// requires a gradient. Parameter gradients accumulate across calls.
void backward(const Var& loss);

namespace ag {

struct ConvOptions {
  int stride = 1;
  int pad = 0;
  int groups = 1;
};

struct WindowOptions {
  int heads = 1;
  int window = 1;
  int table_window = 1;
  int shift = 0;
};

Var conv2d(const Var& x, const Var& weight, const Var& bias, ConvOptions opt);
Var add(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);
Var gelu(const Var& x);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var upsample_nearest2(const Var& x);
Var concat_channels(const Var& a, const Var& b);
Var pad_reflect(const Var& x, int top, int bottom, int left, int right);
Var pad_zero(const Var& x, int bottom, int right);
Var crop(const Var& x, int top, int left, int height, int width);
// qkv is (N, 3C, H, W); bias_table is (1, heads, side, side) with side = 2*table_window-1.
Var window_attention(const Var& qkv, const Var& bias_table, WindowOptions opt);
Var global_avg_pool(const Var& x);
// (N, C, H, W) -> (N, 1, C, C), normalized by H*W.
Var gram(const Var& x);
Var detach(const Var& x);

// Scalar-valued reductions.
Var smooth_l1(const Var& a, const Var& b);
Var squared_error(const Var& a, const Var& b, double factor);
Var bce(const Tensor& target, const Var& prob, double eps);
Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels);
Var weighted_sum(const std::vector<std::pair<double, Var>>& terms);

}  // namespace ag

}  // namespace catintell
