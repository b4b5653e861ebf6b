// Serial, index-by-index versions of the numeric kernels. Slow on purpose:
// every value is computed from the defining sum so the tests have something
// independent to compare the optimized kernels against.

#include <algorithm>
#include <cmath>
#include <vector>

#include "catintell/kernels.hpp"

namespace catintell::reference {

namespace {

std::size_t idx4(int c_total, int h_total, int w_total, int n, int c, int y, int x) {
  return ((static_cast<std::size_t>(n) * c_total + c) * h_total + y) * w_total + x;
}

std::size_t widx(const ConvGeometry& g, int co, int cil, int ky, int kx) {
  return ((static_cast<std::size_t>(co) * g.in_per_group() + cil) * g.kernel_h + ky) * g.kernel_w + kx;
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, const double* in, const double* weight,
                    const double* bias, double* out) {
  g.validate();
  const int oh = g.out_h();
  const int ow = g.out_w();
  for (int n = 0; n < g.batch; ++n) {
    for (int co = 0; co < g.out_channels; ++co) {
      const int grp = co / g.out_per_group();
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bias ? bias[co] : 0.0;
          for (int cil = 0; cil < g.in_per_group(); ++cil) {
            const int ci = grp * g.in_per_group() + cil;
            for (int ky = 0; ky < g.kernel_h; ++ky) {
              for (int kx = 0; kx < g.kernel_w; ++kx) {
                const int iy = oy * g.stride + ky - g.pad;
                const int ix = ox * g.stride + kx - g.pad;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                acc += weight[widx(g, co, cil, ky, kx)] *
                       in[idx4(g.in_channels, g.in_h, g.in_w, n, ci, iy, ix)];
              }
            }
          }
          out[idx4(g.out_channels, oh, ow, n, co, oy, ox)] = acc;
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, const double* dout, const double* weight,
                           double* din) {
  g.validate();
  const int oh = g.out_h();
  const int ow = g.out_w();
  for (int n = 0; n < g.batch; ++n) {
    for (int co = 0; co < g.out_channels; ++co) {
      const int grp = co / g.out_per_group();
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const double d = dout[idx4(g.out_channels, oh, ow, n, co, oy, ox)];
          for (int cil = 0; cil < g.in_per_group(); ++cil) {
            const int ci = grp * g.in_per_group() + cil;
            for (int ky = 0; ky < g.kernel_h; ++ky) {
              for (int kx = 0; kx < g.kernel_w; ++kx) {
                const int iy = oy * g.stride + ky - g.pad;
                const int ix = ox * g.stride + kx - g.pad;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                din[idx4(g.in_channels, g.in_h, g.in_w, n, ci, iy, ix)] +=
                    weight[widx(g, co, cil, ky, kx)] * d;
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, const double* dout, const double* in,
                            double* dweight, double* dbias) {
  g.validate();
  const int oh = g.out_h();
  const int ow = g.out_w();
  for (int n = 0; n < g.batch; ++n) {
    for (int co = 0; co < g.out_channels; ++co) {
      const int grp = co / g.out_per_group();
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const double d = dout[idx4(g.out_channels, oh, ow, n, co, oy, ox)];
          if (dbias) dbias[co] += d;
          if (!dweight) continue;
          for (int cil = 0; cil < g.in_per_group(); ++cil) {
            const int ci = grp * g.in_per_group() + cil;
            for (int ky = 0; ky < g.kernel_h; ++ky) {
              for (int kx = 0; kx < g.kernel_w; ++kx) {
                const int iy = oy * g.stride + ky - g.pad;
                const int ix = ox * g.stride + kx - g.pad;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                dweight[widx(g, co, cil, ky, kx)] +=
                    d * in[idx4(g.in_channels, g.in_h, g.in_w, n, ci, iy, ix)];
              }
            }
          }
        }
      }
    }
  }
}

void layer_norm_forward(int batch, int channels, int pixels, const double* in, const double* gamma,
                        const double* beta, double eps, double* out) {
  for (int n = 0; n < batch; ++n) {
    for (int p = 0; p < pixels; ++p) {
      double mean = 0.0;
      for (int c = 0; c < channels; ++c) mean += in[(static_cast<std::size_t>(n) * channels + c) * pixels + p];
      mean /= channels;
      double var = 0.0;
      for (int c = 0; c < channels; ++c) {
        const double d = in[(static_cast<std::size_t>(n) * channels + c) * pixels + p] - mean;
        var += d * d;
      }
      var /= channels;
      for (int c = 0; c < channels; ++c) {
        const std::size_t at = (static_cast<std::size_t>(n) * channels + c) * pixels + p;
        out[at] = (in[at] - mean) / std::sqrt(var + eps) * (gamma ? gamma[c] : 1.0) + (beta ? beta[c] : 0.0);
      }
    }
  }
}

void window_attention_forward(const AttentionGeometry& g, const double* qkv, const double* bias_table,
                              double* out) {
  g.validate();
  const int H = g.height;
  const int W = g.width;
  const int C = g.channels;
  const int ws = g.window;
  const int s = g.shift;
  const int hd = g.head_dim();
  const int side = g.table_side();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  // Region labels in the rolled frame, built by slicing the grid the way the
  // shifted-window attention mask is usually constructed.
  std::vector<int> mask(static_cast<std::size_t>(H) * W, 0);
  if (s > 0) {
    const int hs[4] = {0, H - ws, H - s, H};
    const int wsl[4] = {0, W - ws, W - s, W};
    int label = 0;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b, ++label) {
        for (int y = hs[a]; y < hs[a + 1]; ++y) {
          for (int x = wsl[b]; x < wsl[b + 1]; ++x) mask[static_cast<std::size_t>(y) * W + x] = label;
        }
      }
    }
  }

  for (int n = 0; n < g.batch; ++n) {
    // rolled[c][y][x] = qkv[c][(y + s) % H][(x + s) % W]
    std::vector<double> rolled(static_cast<std::size_t>(3) * C * H * W);
    for (int c = 0; c < 3 * C; ++c) {
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          rolled[(static_cast<std::size_t>(c) * H + y) * W + x] =
              qkv[((static_cast<std::size_t>(n) * 3 * C + c) * H + (y + s) % H) * W + (x + s) % W];
        }
      }
    }
    std::vector<double> result(static_cast<std::size_t>(C) * H * W, 0.0);
    for (int wy = 0; wy < H / ws; ++wy) {
      for (int wx = 0; wx < W / ws; ++wx) {
        for (int h = 0; h < g.heads; ++h) {
          for (int ai = 0; ai < ws * ws; ++ai) {
            const int yi = wy * ws + ai / ws;
            const int xi = wx * ws + ai % ws;
            std::vector<double> logits(ws * ws, 0.0);
            std::vector<bool> allowed(ws * ws, false);
            double mx = -1e300;
            for (int bj = 0; bj < ws * ws; ++bj) {
              const int yj = wy * ws + bj / ws;
              const int xj = wx * ws + bj % ws;
              if (mask[static_cast<std::size_t>(yi) * W + xi] != mask[static_cast<std::size_t>(yj) * W + xj]) continue;
              allowed[bj] = true;
              double dot = 0.0;
              for (int d = 0; d < hd; ++d) {
                dot += rolled[(static_cast<std::size_t>(h * hd + d) * H + yi) * W + xi] *
                       rolled[(static_cast<std::size_t>(C + h * hd + d) * H + yj) * W + xj];
              }
              const int rel = (ai / ws - bj / ws + g.table_window - 1) * side + (ai % ws - bj % ws + g.table_window - 1);
              logits[bj] = dot * scale + bias_table[static_cast<std::size_t>(h) * side * side + rel];
              mx = std::max(mx, logits[bj]);
            }
            double total = 0.0;
            for (int bj = 0; bj < ws * ws; ++bj) {
              if (allowed[bj]) total += std::exp(logits[bj] - mx);
            }
            for (int d = 0; d < hd; ++d) {
              double acc = 0.0;
              for (int bj = 0; bj < ws * ws; ++bj) {
                if (!allowed[bj]) continue;
                const int yj = wy * ws + bj / ws;
                const int xj = wx * ws + bj % ws;
                acc += std::exp(logits[bj] - mx) / total *
                       rolled[(static_cast<std::size_t>(2 * C + h * hd + d) * H + yj) * W + xj];
              }
              result[(static_cast<std::size_t>(h * hd + d) * H + yi) * W + xi] = acc;
            }
          }
        }
      }
    }
    // roll back
    for (int c = 0; c < C; ++c) {
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          out[((static_cast<std::size_t>(n) * C + c) * H + (y + s) % H) * W + (x + s) % W] =
              result[(static_cast<std::size_t>(c) * H + y) * W + x];
        }
      }
    }
  }
}

}  // namespace catintell::reference
