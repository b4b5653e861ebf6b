#include "catintell/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "catintell/error.hpp"

namespace catintell {

void ConvGeometry::validate() const {
  if (batch < 1 || in_channels < 1 || in_h < 1 || in_w < 1 || out_channels < 1 || kernel_h < 1 ||
      kernel_w < 1 || stride < 1 || pad < 0 || groups < 1) {
    fail(ErrorKind::ShapeError, "invalid convolution geometry");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    fail(ErrorKind::ShapeError, "channels " + std::to_string(in_channels) + "->" +
                                    std::to_string(out_channels) + " not divisible by groups " +
                                    std::to_string(groups));
  }
  if (in_h + 2 * pad < kernel_h || in_w + 2 * pad < kernel_w) {
    fail(ErrorKind::ShapeError, "convolution kernel larger than padded input");
  }
}

void AttentionGeometry::validate() const {
  if (batch < 1 || channels < 1 || heads < 1 || window < 1 || channels % heads != 0) {
    fail(ErrorKind::ShapeError, "invalid attention geometry");
  }
  if (height % window != 0 || width % window != 0) {
    fail(ErrorKind::ShapeError, "attention grid not divisible by window");
  }
  if (table_window < window || shift < 0 || shift >= window) {
    fail(ErrorKind::ShapeError, "invalid attention window/shift");
  }
}

namespace kernels {

namespace {

constexpr int kGemmRows = 6;
constexpr int kGemmCols = 16;
constexpr int kGemmDepth = 256;

int pick_chunk(int rows_of_columns, int pixels) {
  int chunk = 131072 / std::max(1, rows_of_columns);
  chunk = std::clamp(chunk, 32, 2048);
  chunk = (chunk / kGemmCols) * kGemmCols;
  return std::min(chunk, pixels);
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.pad == 0;
}

// cols[r][j] for r over (ci, ky, kx) and j over output pixels [p0, p0 + count).
void im2col(const ConvGeometry& g, const double* in, int p0, int count, double* cols) {
  const int ow = g.out_w();
  int r = 0;
  for (int ci = 0; ci < g.in_channels; ++ci) {
    const double* plane = in + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kernel_h; ++ky) {
      for (int kx = 0; kx < g.kernel_w; ++kx, ++r) {
        double* row = cols + static_cast<std::size_t>(r) * count;
        int oy = p0 / ow;
        int ox = p0 % ow;
        for (int j = 0; j < count; ++j) {
          const int iy = oy * g.stride + ky - g.pad;
          const int ix = ox * g.stride + kx - g.pad;
          row[j] = (iy >= 0 && iy < g.in_h && ix >= 0 && ix < g.in_w) ? plane[iy * g.in_w + ix] : 0.0;
          if (++ox == ow) {
            ox = 0;
            ++oy;
          }
        }
      }
    }
  }
}

void col2im_acc(const ConvGeometry& g, const double* cols, int p0, int count, double* din) {
  const int ow = g.out_w();
  int r = 0;
  for (int ci = 0; ci < g.in_channels; ++ci) {
    double* plane = din + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kernel_h; ++ky) {
      for (int kx = 0; kx < g.kernel_w; ++kx, ++r) {
        const double* row = cols + static_cast<std::size_t>(r) * count;
        int oy = p0 / ow;
        int ox = p0 % ow;
        for (int j = 0; j < count; ++j) {
          const int iy = oy * g.stride + ky - g.pad;
          const int ix = ox * g.stride + kx - g.pad;
          if (iy >= 0 && iy < g.in_h && ix >= 0 && ix < g.in_w) plane[iy * g.in_w + ix] += row[j];
          if (++ox == ow) {
            ox = 0;
            ++oy;
          }
        }
      }
    }
  }
}

void fill_bias(const ConvGeometry& g, const double* bias, double* out) {
  const std::size_t plane = static_cast<std::size_t>(g.out_h()) * g.out_w();
  for (int n = 0; n < g.batch; ++n) {
    for (int co = 0; co < g.out_channels; ++co) {
      double* dst = out + (static_cast<std::size_t>(n) * g.out_channels + co) * plane;
      std::fill(dst, dst + plane, bias ? bias[co] : 0.0);
    }
  }
}

void dense_forward(const ConvGeometry& g, const double* in, const double* weight, double* out) {
  const int pixels = g.out_h() * g.out_w();
  const int depth = g.in_channels * g.kernel_h * g.kernel_w;
  const std::size_t in_sample = static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w;
  const std::size_t out_sample = static_cast<std::size_t>(g.out_channels) * pixels;
  const bool pointwise = is_pointwise(g);
  const int chunk = pick_chunk(depth, pixels);
  const int chunks = (pixels + chunk - 1) / chunk;

#pragma omp parallel
  {
    std::vector<double> cols(pointwise ? 0 : static_cast<std::size_t>(depth) * chunk);
#pragma omp for schedule(static)
    for (int task = 0; task < g.batch * chunks; ++task) {
      const int n = task / chunks;
      const int p0 = (task % chunks) * chunk;
      const int count = std::min(chunk, pixels - p0);
      const double* sample = in + n * in_sample;
      double* dst = out + n * out_sample + p0;
      if (pointwise) {
        gemm_acc(g.out_channels, count, depth, weight, depth, sample + p0, pixels, dst, pixels);
      } else {
        im2col(g, sample, p0, count, cols.data());
        gemm_acc(g.out_channels, count, depth, weight, depth, cols.data(), count, dst, pixels);
      }
    }
  }
}

void dense_backward_input(const ConvGeometry& g, const double* dout, const double* weight,
                          double* din) {
  const int pixels = g.out_h() * g.out_w();
  const int depth = g.in_channels * g.kernel_h * g.kernel_w;
  const std::size_t in_sample = static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w;
  const std::size_t out_sample = static_cast<std::size_t>(g.out_channels) * pixels;
  const bool pointwise = is_pointwise(g);
  const int chunk = pick_chunk(depth, pixels);

  std::vector<double> wt(static_cast<std::size_t>(depth) * g.out_channels);
  for (int co = 0; co < g.out_channels; ++co) {
    for (int r = 0; r < depth; ++r) wt[static_cast<std::size_t>(r) * g.out_channels + co] = weight[static_cast<std::size_t>(co) * depth + r];
  }

#pragma omp parallel
  {
    std::vector<double> dcols(pointwise ? 0 : static_cast<std::size_t>(depth) * chunk);
#pragma omp for schedule(static)
    for (int n = 0; n < g.batch; ++n) {
      const double* src = dout + n * out_sample;
      double* dst = din + n * in_sample;
      for (int p0 = 0; p0 < pixels; p0 += chunk) {
        const int count = std::min(chunk, pixels - p0);
        if (pointwise) {
          gemm_acc(depth, count, g.out_channels, wt.data(), g.out_channels, src + p0, pixels,
                   dst + p0, pixels);
        } else {
          std::fill(dcols.begin(), dcols.begin() + static_cast<std::ptrdiff_t>(depth) * count, 0.0);
          gemm_acc(depth, count, g.out_channels, wt.data(), g.out_channels, src + p0, pixels,
                   dcols.data(), count);
          col2im_acc(g, dcols.data(), p0, count, dst);
        }
      }
    }
  }
}

void dense_backward_weight(const ConvGeometry& g, const double* dout, const double* in,
                           double* dweight) {
  const int pixels = g.out_h() * g.out_w();
  const int depth = g.in_channels * g.kernel_h * g.kernel_w;
  const std::size_t in_sample = static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w;
  const std::size_t out_sample = static_cast<std::size_t>(g.out_channels) * pixels;
  const bool pointwise = is_pointwise(g);
  const int chunk = pick_chunk(depth, pixels);
  std::vector<double> cols(pointwise ? 0 : static_cast<std::size_t>(depth) * chunk);
  std::vector<double> cols_t(static_cast<std::size_t>(depth) * chunk);
  const int row_blocks = (g.out_channels + kGemmRows - 1) / kGemmRows;

  for (int n = 0; n < g.batch; ++n) {
    const double* sample = in + n * in_sample;
    const double* grad = dout + n * out_sample;
    for (int p0 = 0; p0 < pixels; p0 += chunk) {
      const int count = std::min(chunk, pixels - p0);
      const double* src = nullptr;
      int ld = 0;
      if (pointwise) {
        src = sample + p0;
        ld = pixels;
      } else {
        im2col(g, sample, p0, count, cols.data());
        src = cols.data();
        ld = count;
      }
      for (int r = 0; r < depth; ++r) {
        const double* row = src + static_cast<std::size_t>(r) * ld;
        for (int j = 0; j < count; ++j) cols_t[static_cast<std::size_t>(j) * depth + r] = row[j];
      }
#pragma omp parallel for schedule(static)
      for (int blk = 0; blk < row_blocks; ++blk) {
        const int co0 = blk * kGemmRows;
        const int rows = std::min(kGemmRows, g.out_channels - co0);
        gemm_acc(rows, depth, count, grad + static_cast<std::size_t>(co0) * pixels + p0, pixels,
                 cols_t.data(), depth, dweight + static_cast<std::size_t>(co0) * depth, depth);
      }
    }
  }
}

void pad_plane(const double* src, int h, int w, int pad, double* dst) {
  const int pw = w + 2 * pad;
  const int ph = h + 2 * pad;
  std::fill(dst, dst + static_cast<std::size_t>(ph) * pw, 0.0);
  for (int y = 0; y < h; ++y) {
    std::copy(src + static_cast<std::size_t>(y) * w, src + static_cast<std::size_t>(y + 1) * w,
              dst + static_cast<std::size_t>(y + pad) * pw + pad);
  }
}

// out[oy][ox] += sum_{ky,kx} w[ky][kx] * src[oy*stride+ky][ox*stride+kx] over a padded plane.
template <int K>
void correlate_fixed(const double* src, int src_w, const double* w, int oh, int ow, double* out) {
  for (int oy = 0; oy < oh; ++oy) {
    double* orow = out + static_cast<std::size_t>(oy) * ow;
    const double* base = src + static_cast<std::size_t>(oy) * src_w;
#pragma omp simd
    for (int ox = 0; ox < ow; ++ox) {
      double acc = orow[ox];
      for (int ky = 0; ky < K; ++ky) {
        for (int kx = 0; kx < K; ++kx) acc += w[ky * K + kx] * base[ky * src_w + ox + kx];
      }
      orow[ox] = acc;
    }
  }
}

void correlate(const double* src, int src_w, const double* w, int kh, int kw, int stride, int oh,
               int ow, double* out) {
  if (stride == 1 && kh == kw) {
    switch (kh) {
      case 3: correlate_fixed<3>(src, src_w, w, oh, ow, out); return;
      case 5: correlate_fixed<5>(src, src_w, w, oh, ow, out); return;
      default: break;
    }
  }
  for (int oy = 0; oy < oh; ++oy) {
    double* orow = out + static_cast<std::size_t>(oy) * ow;
    for (int ky = 0; ky < kh; ++ky) {
      const double* srow = src + static_cast<std::size_t>(oy * stride + ky) * src_w;
      for (int kx = 0; kx < kw; ++kx) {
        const double wv = w[ky * kw + kx];
#pragma omp simd
        for (int ox = 0; ox < ow; ++ox) orow[ox] += wv * srow[ox * stride + kx];
      }
    }
  }
}

void grouped_forward(const ConvGeometry& g, const double* in, const double* weight, double* out) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const int ipg = g.in_per_group();
  const int opg = g.out_per_group();
  const int ph = g.in_h + 2 * g.pad;
  const int pw = g.in_w + 2 * g.pad;
  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
  const int ksize = g.kernel_h * g.kernel_w;

#pragma omp parallel
  {
    std::vector<double> padded(static_cast<std::size_t>(ph) * pw);
#pragma omp for schedule(static)
    for (int task = 0; task < g.batch * g.out_channels; ++task) {
      const int n = task / g.out_channels;
      const int co = task % g.out_channels;
      const int grp = co / opg;
      double* dst = out + (static_cast<std::size_t>(n) * g.out_channels + co) * out_plane;
      for (int cil = 0; cil < ipg; ++cil) {
        const int ci = grp * ipg + cil;
        pad_plane(in + (static_cast<std::size_t>(n) * g.in_channels + ci) * in_plane, g.in_h, g.in_w,
                  g.pad, padded.data());
        correlate(padded.data(), pw, weight + (static_cast<std::size_t>(co) * ipg + cil) * ksize,
                  g.kernel_h, g.kernel_w, g.stride, oh, ow, dst);
      }
    }
  }
}

void grouped_backward_input(const ConvGeometry& g, const double* dout, const double* weight,
                            double* din) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const int ipg = g.in_per_group();
  const int opg = g.out_per_group();
  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
  const int ksize = g.kernel_h * g.kernel_w;
  const bool transposed_ok = g.stride == 1 && g.pad <= g.kernel_h - 1 && g.pad <= g.kernel_w - 1;

  if (transposed_ok) {
    // Stride-1 input gradient is a correlation of the padded output gradient
    // with the spatially flipped kernel.
    const int tpy = g.kernel_h - 1 - g.pad;
    const int tpx = g.kernel_w - 1 - g.pad;
    const int ph = oh + 2 * tpy;
    const int pw = ow + 2 * tpx;
#pragma omp parallel
    {
      std::vector<double> padded(static_cast<std::size_t>(ph) * pw);
      std::vector<double> flipped(ksize);
#pragma omp for schedule(static)
      for (int task = 0; task < g.batch * g.in_channels; ++task) {
        const int n = task / g.in_channels;
        const int ci = task % g.in_channels;
        const int grp = ci / ipg;
        const int cil = ci % ipg;
        double* dst = din + (static_cast<std::size_t>(n) * g.in_channels + ci) * in_plane;
        for (int col = 0; col < opg; ++col) {
          const int co = grp * opg + col;
          const double* src = dout + (static_cast<std::size_t>(n) * g.out_channels + co) * out_plane;
          std::fill(padded.begin(), padded.end(), 0.0);
          for (int y = 0; y < oh; ++y) {
            std::copy(src + static_cast<std::size_t>(y) * ow, src + static_cast<std::size_t>(y + 1) * ow,
                      padded.data() + static_cast<std::size_t>(y + tpy) * pw + tpx);
          }
          const double* wk = weight + (static_cast<std::size_t>(co) * ipg + cil) * ksize;
          for (int k = 0; k < ksize; ++k) flipped[k] = wk[ksize - 1 - k];
          correlate(padded.data(), pw, flipped.data(), g.kernel_h, g.kernel_w, 1, g.in_h, g.in_w, dst);
        }
      }
    }
    return;
  }

#pragma omp parallel for schedule(static)
  for (int task = 0; task < g.batch * g.in_channels; ++task) {
    const int n = task / g.in_channels;
    const int ci = task % g.in_channels;
    const int grp = ci / ipg;
    const int cil = ci % ipg;
    double* dst = din + (static_cast<std::size_t>(n) * g.in_channels + ci) * in_plane;
    for (int col = 0; col < opg; ++col) {
      const int co = grp * opg + col;
      const double* src = dout + (static_cast<std::size_t>(n) * g.out_channels + co) * out_plane;
      const double* wk = weight + (static_cast<std::size_t>(co) * ipg + cil) * ksize;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ky = 0; ky < g.kernel_h; ++ky) {
          const int iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const double d = src[oy * ow + ox];
            for (int kx = 0; kx < g.kernel_w; ++kx) {
              const int ix = ox * g.stride + kx - g.pad;
              if (ix >= 0 && ix < g.in_w) dst[iy * g.in_w + ix] += wk[ky * g.kernel_w + kx] * d;
            }
          }
        }
      }
    }
  }
}

void grouped_backward_weight(const ConvGeometry& g, const double* dout, const double* in,
                             double* dweight) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const int ipg = g.in_per_group();
  const int opg = g.out_per_group();
  const int ph = g.in_h + 2 * g.pad;
  const int pw = g.in_w + 2 * g.pad;
  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
  const int ksize = g.kernel_h * g.kernel_w;

#pragma omp parallel
  {
    std::vector<double> padded(static_cast<std::size_t>(ph) * pw);
#pragma omp for schedule(static)
    for (int co = 0; co < g.out_channels; ++co) {
      const int grp = co / opg;
      for (int cil = 0; cil < ipg; ++cil) {
        const int ci = grp * ipg + cil;
        double* dw = dweight + (static_cast<std::size_t>(co) * ipg + cil) * ksize;
        for (int n = 0; n < g.batch; ++n) {
          pad_plane(in + (static_cast<std::size_t>(n) * g.in_channels + ci) * in_plane, g.in_h,
                    g.in_w, g.pad, padded.data());
          const double* grad = dout + (static_cast<std::size_t>(n) * g.out_channels + co) * out_plane;
          for (int ky = 0; ky < g.kernel_h; ++ky) {
            for (int kx = 0; kx < g.kernel_w; ++kx) {
              double acc = 0.0;
              for (int oy = 0; oy < oh; ++oy) {
                const double* grow = grad + static_cast<std::size_t>(oy) * ow;
                const double* srow = padded.data() + static_cast<std::size_t>(oy * g.stride + ky) * pw + kx;
                if (g.stride == 1) {
#pragma omp simd reduction(+ : acc)
                  for (int ox = 0; ox < ow; ++ox) acc += grow[ox] * srow[ox];
                } else {
                  for (int ox = 0; ox < ow; ++ox) acc += grow[ox] * srow[ox * g.stride];
                }
              }
              dw[ky * g.kernel_w + kx] += acc;
            }
          }
        }
      }
    }
  }
}

}  // namespace

namespace {

// Eight doubles; lowers to one AVX-512 register or two AVX2 registers.
typedef double v8d __attribute__((vector_size(64)));

inline v8d load8(const double* p) {
  v8d v;
  __builtin_memcpy(&v, p, sizeof(v));
  return v;
}

inline void store8(double* p, v8d v) { __builtin_memcpy(p, &v, sizeof(v)); }

// C[6 x 16] += A[6 x (k0..k1)] * B[(k0..k1) x 16] held in twelve accumulators.
inline void micro_6x16(int k0, int k1, const double* a, int lda, const double* b, int ldb, double* c,
                       int ldc) {
  v8d acc[6][2];
  for (int r = 0; r < 6; ++r) {
    acc[r][0] = load8(c + static_cast<std::size_t>(r) * ldc);
    acc[r][1] = load8(c + static_cast<std::size_t>(r) * ldc + 8);
  }
  for (int p = k0; p < k1; ++p) {
    const double* brow = b + static_cast<std::size_t>(p) * ldb;
    const v8d b0 = load8(brow);
    const v8d b1 = load8(brow + 8);
    for (int r = 0; r < 6; ++r) {
      const double av = a[static_cast<std::size_t>(r) * lda + p];
      acc[r][0] += av * b0;
      acc[r][1] += av * b1;
    }
  }
  for (int r = 0; r < 6; ++r) {
    store8(c + static_cast<std::size_t>(r) * ldc, acc[r][0]);
    store8(c + static_cast<std::size_t>(r) * ldc + 8, acc[r][1]);
  }
}

}  // namespace

void gemm_acc(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
              int ldc) {
  constexpr int kRows = 6;
  constexpr int kCols = 16;
  for (int k0 = 0; k0 < k; k0 += kGemmDepth) {
    const int k1 = std::min(k, k0 + kGemmDepth);
    int i = 0;
    for (; i + kRows <= m; i += kRows) {
      const double* arows = a + static_cast<std::size_t>(i) * lda;
      double* crows = c + static_cast<std::size_t>(i) * ldc;
      int j = 0;
      for (; j + kCols <= n; j += kCols) micro_6x16(k0, k1, arows, lda, b + j, ldb, crows + j, ldc);
      if (j < n) {
        for (int r = 0; r < kRows; ++r) {
          const double* arow = arows + static_cast<std::size_t>(r) * lda;
          double* crow = crows + static_cast<std::size_t>(r) * ldc;
          for (int p = k0; p < k1; ++p) {
            const double av = arow[p];
            const double* brow = b + static_cast<std::size_t>(p) * ldb;
            for (int jj = j; jj < n; ++jj) crow[jj] += av * brow[jj];
          }
        }
      }
    }
    for (; i < m; ++i) {
      const double* arow = a + static_cast<std::size_t>(i) * lda;
      double* crow = c + static_cast<std::size_t>(i) * ldc;
      for (int p = k0; p < k1; ++p) {
        const double av = arow[p];
        const double* brow = b + static_cast<std::size_t>(p) * ldb;
#pragma omp simd
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

void conv2d_forward(const ConvGeometry& g, const double* in, const double* weight,
                    const double* bias, double* out) {
  g.validate();
  fill_bias(g, bias, out);
  if (g.groups == 1) {
    dense_forward(g, in, weight, out);
  } else {
    grouped_forward(g, in, weight, out);
  }
}

void conv2d_backward_input(const ConvGeometry& g, const double* dout, const double* weight,
                           double* din) {
  g.validate();
  if (g.groups == 1) {
    dense_backward_input(g, dout, weight, din);
  } else {
    grouped_backward_input(g, dout, weight, din);
  }
}

void conv2d_backward_weight(const ConvGeometry& g, const double* dout, const double* in,
                            double* dweight, double* dbias) {
  g.validate();
  if (dweight) {
    if (g.groups == 1) {
      dense_backward_weight(g, dout, in, dweight);
    } else {
      grouped_backward_weight(g, dout, in, dweight);
    }
  }
  if (dbias) {
    const std::size_t plane = static_cast<std::size_t>(g.out_h()) * g.out_w();
#pragma omp parallel for schedule(static)
    for (int co = 0; co < g.out_channels; ++co) {
      double acc = 0.0;
      for (int n = 0; n < g.batch; ++n) {
        const double* src = dout + (static_cast<std::size_t>(n) * g.out_channels + co) * plane;
#pragma omp simd reduction(+ : acc)
        for (std::size_t p = 0; p < plane; ++p) acc += src[p];
      }
      dbias[co] += acc;
    }
  }
}

void layer_norm_forward(int batch, int channels, int pixels, const double* in, const double* gamma,
                        const double* beta, double eps, double* out, double* mean, double* rstd) {
  const std::size_t sample = static_cast<std::size_t>(channels) * pixels;
#pragma omp parallel for schedule(static)
  for (int n = 0; n < batch; ++n) {
    const double* x = in + n * sample;
    double* y = out + n * sample;
    double* mu = mean + static_cast<std::size_t>(n) * pixels;
    double* rs = rstd + static_cast<std::size_t>(n) * pixels;
    std::fill(mu, mu + pixels, 0.0);
    std::fill(rs, rs + pixels, 0.0);
    for (int c = 0; c < channels; ++c) {
      const double* xc = x + static_cast<std::size_t>(c) * pixels;
#pragma omp simd
      for (int p = 0; p < pixels; ++p) mu[p] += xc[p];
    }
    const double inv_c = 1.0 / channels;
#pragma omp simd
    for (int p = 0; p < pixels; ++p) mu[p] *= inv_c;
    for (int c = 0; c < channels; ++c) {
      const double* xc = x + static_cast<std::size_t>(c) * pixels;
#pragma omp simd
      for (int p = 0; p < pixels; ++p) {
        const double d = xc[p] - mu[p];
        rs[p] += d * d;
      }
    }
    for (int p = 0; p < pixels; ++p) rs[p] = 1.0 / std::sqrt(rs[p] * inv_c + eps);
    for (int c = 0; c < channels; ++c) {
      const double* xc = x + static_cast<std::size_t>(c) * pixels;
      double* yc = y + static_cast<std::size_t>(c) * pixels;
      const double gc = gamma ? gamma[c] : 1.0;
      const double bc = beta ? beta[c] : 0.0;
#pragma omp simd
      for (int p = 0; p < pixels; ++p) yc[p] = (xc[p] - mu[p]) * rs[p] * gc + bc;
    }
  }
}

void layer_norm_backward(int batch, int channels, int pixels, const double* in,
                         const double* gamma, const double* mean, const double* rstd,
                         const double* dout, double* din, double* dgamma, double* dbeta) {
  const std::size_t sample = static_cast<std::size_t>(channels) * pixels;
  if (dgamma || dbeta) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < channels; ++c) {
      double sg = 0.0;
      double sb = 0.0;
      for (int n = 0; n < batch; ++n) {
        const double* xc = in + n * sample + static_cast<std::size_t>(c) * pixels;
        const double* dc = dout + n * sample + static_cast<std::size_t>(c) * pixels;
        const double* mu = mean + static_cast<std::size_t>(n) * pixels;
        const double* rs = rstd + static_cast<std::size_t>(n) * pixels;
#pragma omp simd reduction(+ : sg, sb)
        for (int p = 0; p < pixels; ++p) {
          sg += dc[p] * (xc[p] - mu[p]) * rs[p];
          sb += dc[p];
        }
      }
      if (dgamma) dgamma[c] += sg;
      if (dbeta) dbeta[c] += sb;
    }
  }
  if (!din) return;
#pragma omp parallel
  {
    std::vector<double> sum_g(pixels);
    std::vector<double> sum_gx(pixels);
#pragma omp for schedule(static)
    for (int n = 0; n < batch; ++n) {
      const double* x = in + n * sample;
      const double* dy = dout + n * sample;
      double* dx = din + n * sample;
      const double* mu = mean + static_cast<std::size_t>(n) * pixels;
      const double* rs = rstd + static_cast<std::size_t>(n) * pixels;
      std::fill(sum_g.begin(), sum_g.end(), 0.0);
      std::fill(sum_gx.begin(), sum_gx.end(), 0.0);
      for (int c = 0; c < channels; ++c) {
        const double gc = gamma ? gamma[c] : 1.0;
        const double* xc = x + static_cast<std::size_t>(c) * pixels;
        const double* dc = dy + static_cast<std::size_t>(c) * pixels;
        double* sg = sum_g.data();
        double* sgx = sum_gx.data();
#pragma omp simd
        for (int p = 0; p < pixels; ++p) {
          const double gv = dc[p] * gc;
          sg[p] += gv;
          sgx[p] += gv * (xc[p] - mu[p]) * rs[p];
        }
      }
      const double inv_c = 1.0 / channels;
      for (int c = 0; c < channels; ++c) {
        const double gc = gamma ? gamma[c] : 1.0;
        const double* xc = x + static_cast<std::size_t>(c) * pixels;
        const double* dc = dy + static_cast<std::size_t>(c) * pixels;
        double* out = dx + static_cast<std::size_t>(c) * pixels;
        const double* sg = sum_g.data();
        const double* sgx = sum_gx.data();
#pragma omp simd
        for (int p = 0; p < pixels; ++p) {
          const double xhat = (xc[p] - mu[p]) * rs[p];
          out[p] += rs[p] * (dc[p] * gc - sg[p] * inv_c - xhat * sgx[p] * inv_c);
        }
      }
    }
  }
}

void gelu_forward(std::size_t count, const double* in, double* out) {
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < count; ++i) out[i] = 0.5 * in[i] * (1.0 + std::erf(in[i] * inv_sqrt2));
}

void gelu_backward(std::size_t count, const double* in, const double* dout, double* din) {
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < count; ++i) {
    const double x = in[i];
    const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
    const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
    din[i] += dout[i] * (cdf + x * pdf);
  }
}

namespace {

struct WindowTokens {
  std::vector<int> pos;    // flat y*W+x in the unshifted grid
  std::vector<int> region; // shifted-window mask label
};

void window_tokens(const AttentionGeometry& g, int win, WindowTokens& t) {
  const int wpr = g.width / g.window;
  const int wy = win / wpr;
  const int wx = win % wpr;
  const int tokens = g.tokens();
  t.pos.resize(tokens);
  t.region.resize(tokens);
  auto band = [&](int v, int extent) {
    if (g.shift == 0) return 0;
    if (v < extent - g.window) return 0;
    if (v < extent - g.shift) return 1;
    return 2;
  };
  for (int ty = 0; ty < g.window; ++ty) {
    for (int tx = 0; tx < g.window; ++tx) {
      const int ys = wy * g.window + ty;
      const int xs = wx * g.window + tx;
      const int y = (ys + g.shift) % g.height;
      const int x = (xs + g.shift) % g.width;
      t.pos[ty * g.window + tx] = y * g.width + x;
      t.region[ty * g.window + tx] = band(ys, g.height) * 3 + band(xs, g.width);
    }
  }
}

int rel_index(const AttentionGeometry& g, int i, int j) {
  const int dy = i / g.window - j / g.window + g.table_window - 1;
  const int dx = i % g.window - j % g.window + g.table_window - 1;
  return dy * g.table_side() + dx;
}

}  // namespace

void window_attention_forward(const AttentionGeometry& g, const double* qkv, const double* bias_table,
                              double* out, double* probs) {
  g.validate();
  const int tokens = g.tokens();
  const int hd = g.head_dim();
  const int windows = g.windows_per_image();
  const std::size_t plane = static_cast<std::size_t>(g.height) * g.width;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const int table = g.table_side() * g.table_side();

#pragma omp parallel
  {
    WindowTokens t;
    std::vector<double> q(static_cast<std::size_t>(tokens) * hd);
    std::vector<double> k(q.size());
    std::vector<double> v(q.size());
    std::vector<double> row(tokens);
#pragma omp for schedule(static)
    for (int task = 0; task < g.batch * windows; ++task) {
      const int n = task / windows;
      const int win = task % windows;
      window_tokens(g, win, t);
      const double* src = qkv + static_cast<std::size_t>(n) * 3 * g.channels * plane;
      double* dst = out + static_cast<std::size_t>(n) * g.channels * plane;
      for (int h = 0; h < g.heads; ++h) {
        for (int d = 0; d < hd; ++d) {
          const double* qc = src + static_cast<std::size_t>(h * hd + d) * plane;
          const double* kc = src + static_cast<std::size_t>(g.channels + h * hd + d) * plane;
          const double* vc = src + static_cast<std::size_t>(2 * g.channels + h * hd + d) * plane;
          for (int i = 0; i < tokens; ++i) {
            q[static_cast<std::size_t>(i) * hd + d] = qc[t.pos[i]];
            k[static_cast<std::size_t>(i) * hd + d] = kc[t.pos[i]];
            v[static_cast<std::size_t>(i) * hd + d] = vc[t.pos[i]];
          }
        }
        const double* bias = bias_table + static_cast<std::size_t>(h) * table;
        double* p = probs + ((static_cast<std::size_t>(n) * windows + win) * g.heads + h) * tokens * tokens;
        for (int i = 0; i < tokens; ++i) {
          double mx = -1e300;
          const double* qi = q.data() + static_cast<std::size_t>(i) * hd;
          for (int j = 0; j < tokens; ++j) {
            if (t.region[i] != t.region[j]) continue;
            const double* kj = k.data() + static_cast<std::size_t>(j) * hd;
            double s = 0.0;
            for (int d = 0; d < hd; ++d) s += qi[d] * kj[d];
            s = s * scale + bias[rel_index(g, i, j)];
            row[j] = s;
            mx = std::max(mx, s);
          }
          double total = 0.0;
          for (int j = 0; j < tokens; ++j) {
            if (t.region[i] != t.region[j]) {
              row[j] = 0.0;
              continue;
            }
            row[j] = std::exp(row[j] - mx);
            total += row[j];
          }
          double* pi = p + static_cast<std::size_t>(i) * tokens;
          for (int j = 0; j < tokens; ++j) pi[j] = row[j] / total;
          for (int d = 0; d < hd; ++d) {
            double acc = 0.0;
            for (int j = 0; j < tokens; ++j) acc += pi[j] * v[static_cast<std::size_t>(j) * hd + d];
            dst[static_cast<std::size_t>(h * hd + d) * plane + t.pos[i]] = acc;
          }
        }
      }
    }
  }
}

void window_attention_backward(const AttentionGeometry& g, const double* qkv,
                               const double* bias_table, const double* probs, const double* dout,
                               double* dqkv, double* dbias_table) {
  (void)bias_table;
  g.validate();
  const int tokens = g.tokens();
  const int hd = g.head_dim();
  const int windows = g.windows_per_image();
  const std::size_t plane = static_cast<std::size_t>(g.height) * g.width;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const int table = g.table_side() * g.table_side();
  const int tasks = g.batch * windows;
  // Per-window bias-table partials, reduced serially below for a fixed order.
  std::vector<double> table_parts(dbias_table ? static_cast<std::size_t>(tasks) * g.heads * table : 0);

#pragma omp parallel
  {
    WindowTokens t;
    const std::size_t mat = static_cast<std::size_t>(tokens) * hd;
    std::vector<double> q(mat), k(mat), v(mat), dov(mat), dq(mat), dk(mat), dv(mat);
    std::vector<double> ds(static_cast<std::size_t>(tokens) * tokens);
#pragma omp for schedule(static)
    for (int task = 0; task < tasks; ++task) {
      const int n = task / windows;
      const int win = task % windows;
      window_tokens(g, win, t);
      const double* src = qkv + static_cast<std::size_t>(n) * 3 * g.channels * plane;
      const double* go = dout + static_cast<std::size_t>(n) * g.channels * plane;
      for (int h = 0; h < g.heads; ++h) {
        for (int d = 0; d < hd; ++d) {
          const std::size_t qc = static_cast<std::size_t>(h * hd + d) * plane;
          const std::size_t kc = static_cast<std::size_t>(g.channels + h * hd + d) * plane;
          const std::size_t vc = static_cast<std::size_t>(2 * g.channels + h * hd + d) * plane;
          for (int i = 0; i < tokens; ++i) {
            const std::size_t at = static_cast<std::size_t>(i) * hd + d;
            q[at] = src[qc + t.pos[i]];
            k[at] = src[kc + t.pos[i]];
            v[at] = src[vc + t.pos[i]];
            dov[at] = go[qc + t.pos[i]];
          }
        }
        const double* p = probs + ((static_cast<std::size_t>(n) * windows + win) * g.heads + h) * tokens * tokens;
        std::fill(dv.begin(), dv.end(), 0.0);
        for (int i = 0; i < tokens; ++i) {
          const double* pi = p + static_cast<std::size_t>(i) * tokens;
          const double* doi = dov.data() + static_cast<std::size_t>(i) * hd;
          double dot = 0.0;
          double* dsi = ds.data() + static_cast<std::size_t>(i) * tokens;
          for (int j = 0; j < tokens; ++j) {
            const double* vj = v.data() + static_cast<std::size_t>(j) * hd;
            double* dvj = dv.data() + static_cast<std::size_t>(j) * hd;
            double dp = 0.0;
            for (int d = 0; d < hd; ++d) {
              dp += doi[d] * vj[d];
              dvj[d] += pi[j] * doi[d];
            }
            dsi[j] = dp;
            dot += pi[j] * dp;
          }
          for (int j = 0; j < tokens; ++j) dsi[j] = pi[j] * (dsi[j] - dot);
        }
        std::fill(dq.begin(), dq.end(), 0.0);
        std::fill(dk.begin(), dk.end(), 0.0);
        double* part = dbias_table ? table_parts.data() + (static_cast<std::size_t>(task) * g.heads + h) * table : nullptr;
        for (int i = 0; i < tokens; ++i) {
          const double* dsi = ds.data() + static_cast<std::size_t>(i) * tokens;
          const double* qi = q.data() + static_cast<std::size_t>(i) * hd;
          double* dqi = dq.data() + static_cast<std::size_t>(i) * hd;
          for (int j = 0; j < tokens; ++j) {
            const double s = dsi[j];
            if (s == 0.0) continue;
            const double* kj = k.data() + static_cast<std::size_t>(j) * hd;
            double* dkj = dk.data() + static_cast<std::size_t>(j) * hd;
            for (int d = 0; d < hd; ++d) {
              dqi[d] += scale * s * kj[d];
              dkj[d] += scale * s * qi[d];
            }
            if (part) part[rel_index(g, i, j)] += s;
          }
        }
        if (dqkv) {
          double* dst = dqkv + static_cast<std::size_t>(n) * 3 * g.channels * plane;
          for (int d = 0; d < hd; ++d) {
            const std::size_t qc = static_cast<std::size_t>(h * hd + d) * plane;
            const std::size_t kc = static_cast<std::size_t>(g.channels + h * hd + d) * plane;
            const std::size_t vc = static_cast<std::size_t>(2 * g.channels + h * hd + d) * plane;
            for (int i = 0; i < tokens; ++i) {
              const std::size_t at = static_cast<std::size_t>(i) * hd + d;
              dst[qc + t.pos[i]] += dq[at];
              dst[kc + t.pos[i]] += dk[at];
              dst[vc + t.pos[i]] += dv[at];
            }
          }
        }
      }
    }
  }
  if (dbias_table) {
    for (int task = 0; task < tasks; ++task) {
      const double* part = table_parts.data() + static_cast<std::size_t>(task) * g.heads * table;
      for (int e = 0; e < g.heads * table; ++e) dbias_table[e] += part[e];
    }
  }
}

}  // namespace kernels

}  // namespace catintell
