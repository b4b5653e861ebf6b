#pragma once

// Numeric kernels behind the autograd ops. Everything here works on raw
// NCHW buffers; the `kernels` namespace holds the OpenMP-parallel versions,
// `reference` holds straightforward serial loops that the tests compare
// against. Parallel loops only ever split over independent outputs, so
// results do not depend on the thread count.

#include <cstddef>
#include <vector>

namespace catintell {

struct ConvGeometry {
  int batch = 1;
  int in_channels = 1;
  int in_h = 1;
  int in_w = 1;
  int out_channels = 1;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int pad = 0;
  int groups = 1;

  int out_h() const { return (in_h + 2 * pad - kernel_h) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel_w) / stride + 1; }
  int in_per_group() const { return in_channels / groups; }
  int out_per_group() const { return out_channels / groups; }
  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_per_group() * kernel_h * kernel_w;
  }
  void validate() const;
};

// Window attention over a (N, 3C, H, W) q/k/v tensor; H and W must be
// multiples of `window`. `shift` rolls the grid by -shift before
// partitioning and masks tokens that wrapped around (shifted windows).
struct AttentionGeometry {
  int batch = 1;
  int channels = 1;  // C; q, k and v each have C channels
  int height = 1;
  int width = 1;
  int heads = 1;
  int window = 1;       // effective window side, divides height and width
  int table_window = 1; // window side the bias table was sized for (>= window)
  int shift = 0;

  int head_dim() const { return channels / heads; }
  int tokens() const { return window * window; }
  int windows_per_image() const { return (height / window) * (width / window); }
  int table_side() const { return 2 * table_window - 1; }
  std::size_t probs_count() const {
    return static_cast<std::size_t>(batch) * windows_per_image() * heads * tokens() * tokens();
  }
  void validate() const;
};

namespace kernels {

// out = conv(in, weight) + bias; out is overwritten. bias may be null.
void conv2d_forward(const ConvGeometry& g, const double* in, const double* weight,
                    const double* bias, double* out);
// din += conv^T(dout, weight)
void conv2d_backward_input(const ConvGeometry& g, const double* dout, const double* weight,
                           double* din);
// dweight += dL/dW, dbias += dL/db (dbias may be null)
void conv2d_backward_weight(const ConvGeometry& g, const double* dout, const double* in,
                            double* dweight, double* dbias);

// C[MxN] += A[MxK] * B[KxN], all row-major with explicit leading dimensions.
void gemm_acc(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
              int ldc);

// Per-pixel normalization across channels with affine scale/offset.
// mean and rstd receive batch*h*w entries each for the backward pass.
void layer_norm_forward(int batch, int channels, int pixels, const double* in, const double* gamma,
                        const double* beta, double eps, double* out, double* mean, double* rstd);
// din, dgamma, dbeta accumulate; any of them may be null.
void layer_norm_backward(int batch, int channels, int pixels, const double* in,
                         const double* gamma, const double* mean, const double* rstd,
                         const double* dout, double* din, double* dgamma, double* dbeta);

void gelu_forward(std::size_t count, const double* in, double* out);
void gelu_backward(std::size_t count, const double* in, const double* dout, double* din);

// probs receives softmax weights (size g.probs_count()) for the backward pass.
void window_attention_forward(const AttentionGeometry& g, const double* qkv, const double* bias_table,
                              double* out, double* probs);
// dqkv and dbias_table accumulate; either may be null.
void window_attention_backward(const AttentionGeometry& g, const double* qkv,
                               const double* bias_table, const double* probs, const double* dout,
                               double* dqkv, double* dbias_table);

}  // namespace kernels

namespace reference {

void conv2d_forward(const ConvGeometry& g, const double* in, const double* weight,
                    const double* bias, double* out);
void conv2d_backward_input(const ConvGeometry& g, const double* dout, const double* weight,
                           double* din);
void conv2d_backward_weight(const ConvGeometry& g, const double* dout, const double* in,
                            double* dweight, double* dbias);
void layer_norm_forward(int batch, int channels, int pixels, const double* in, const double* gamma,
                        const double* beta, double eps, double* out);
// Forward only: rolls the grid explicitly, builds the region mask image and
// evaluates each window's attention with plain loops.
void window_attention_forward(const AttentionGeometry& g, const double* qkv, const double* bias_table,
                              double* out);

}  // namespace reference

}  // namespace catintell
