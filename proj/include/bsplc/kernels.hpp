#pragma once

// Dense kernels behind the autodiff ops.
//
// Two implementations share one set of signatures:
//   serial::   direct nested loops, kept as the reference the tests check against
//   parallel:: im2col + axpy-form GEMM, OpenMP over output rows
//
// All tensors are row-major double. Convolution activations are laid out
// [batch, channel, rows, cols]; for the generator rows are time frames and
// cols are frequency bins.

#include <cstddef>
#include <vector>

namespace bsplc::kernels {

/// Geometry of a grouped, strided, dilated 2-D convolution with asymmetric padding.
struct Conv2dGeometry {
  int cin = 1;
  int cout = 1;
  int groups = 1;
  int kh = 1, kw = 1;
  int sh = 1, sw = 1;
  int dh = 1, dw = 1;
  int pad_top = 0, pad_bottom = 0, pad_left = 0, pad_right = 0;

  int out_h(int h) const { return (h + pad_top + pad_bottom - dh * (kh - 1) - 1) / sh + 1; }
  int out_w(int w) const { return (w + pad_left + pad_right - dw * (kw - 1) - 1) / sw + 1; }
  int col_rows() const { return (cin / groups) * kh * kw; }
  std::size_t weight_size() const {
    return static_cast<std::size_t>(cout) * col_rows();
  }
};

/// Causal-in-time, transposed-in-frequency convolution (decoder upsampling).
///
/// Output frame t reads input frames t-(kh-1) .. t. Along columns, input
/// column i contributes to output column i*sw - crop_left + j for tap j.
/// Weight layout is [cout][kw][cin][kh].
struct ConvTransposeGeometry {
  int cin = 1;
  int cout = 1;
  int kh = 1, kw = 1;
  int sw = 1;
  int crop_left = 0, crop_right = 0;

  int out_w(int w) const { return (w - 1) * sw + kw - crop_left - crop_right; }
  std::size_t weight_size() const {
    return static_cast<std::size_t>(cout) * kw * cin * kh;
  }
};

// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c);
// C[M,N] += A[K,M]^T * B[K,N]
void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c);
// C[M,N] += A[M,K] * B[N,K]^T
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c);

namespace serial {

void conv2d_forward(const Conv2dGeometry& g, int batch, int h, int w, const double* x,
                    const double* weight, const double* bias, double* y);
// Accumulates into dx, dweight, dbias (any of which may be null).
void conv2d_backward(const Conv2dGeometry& g, int batch, int h, int w, const double* x,
                     const double* weight, const double* dy, double* dx, double* dweight,
                     double* dbias);

void conv_transpose_forward(const ConvTransposeGeometry& g, int batch, int h, int w,
                            const double* x, const double* weight, const double* bias, double* y);
void conv_transpose_backward(const ConvTransposeGeometry& g, int batch, int h, int w,
                             const double* x, const double* weight, const double* dy, double* dx,
                             double* dweight, double* dbias);

// y[R,O] = x[R,I] * W[O,I]^T + b
void linear_forward(int rows, int in, int out, const double* x, const double* weight,
                    const double* bias, double* y);
void linear_backward(int rows, int in, int out, const double* x, const double* weight,
                     const double* dy, double* dx, double* dweight, double* dbias);

}  // namespace serial

namespace parallel {

void conv2d_forward(const Conv2dGeometry& g, int batch, int h, int w, const double* x,
                    const double* weight, const double* bias, double* y);
void conv2d_backward(const Conv2dGeometry& g, int batch, int h, int w, const double* x,
                     const double* weight, const double* dy, double* dx, double* dweight,
                     double* dbias);

void conv_transpose_forward(const ConvTransposeGeometry& g, int batch, int h, int w,
                            const double* x, const double* weight, const double* bias, double* y);
void conv_transpose_backward(const ConvTransposeGeometry& g, int batch, int h, int w,
                             const double* x, const double* weight, const double* dy, double* dx,
                             double* dweight, double* dbias);

void linear_forward(int rows, int in, int out, const double* x, const double* weight,
                    const double* bias, double* y);
void linear_backward(int rows, int in, int out, const double* x, const double* weight,
                     const double* dy, double* dx, double* dweight, double* dbias);

}  // namespace parallel

// Recurrent cells, shared by the batch ops and the streaming generator.
// Weight matrices are passed transposed: whh_t is [H][G*H].

/// LSTM step for n rows. On entry `gates` (n x 4H) holds x*W_ih^T + b; on exit
/// the activated gates (i, f, g, o). Writes h and c (n x H).
void lstm_cell(int n, int hidden, const double* whh_t, const double* h_prev, const double* c_prev,
               double* gates, double* h, double* c);

/// GRU step for n rows. `xg` (n x 3H) is x*W_ih^T + b_ih. Writes hg = h_prev*W_hh^T + b_hh,
/// the activated gates rzn = (r, z, n) and the new state h.
void gru_cell(int n, int hidden, const double* whh_t, const double* b_hh, const double* xg,
              const double* h_prev, double* hg, double* rzn, double* h);

/// Row-major transpose of a [rows][cols] matrix.
std::vector<double> transpose(const double* m, int rows, int cols);

// ---------------------------------------------------------------------------
// Single-row kernels. The parallel batch kernels are loops over these, and the
// streaming generator calls them directly on its history buffers, so batch and
// streaming execution perform identical arithmetic.

/// Computes output row `ho` of a convolution for one batch item.
/// `row(c, hi)` returns a pointer to input row hi of channel c (w values), or
/// nullptr when hi falls in the padding. `col` needs col_rows()*out_w scratch.
/// `out` receives cout rows of out_w values, `out_stride` apart.
template <class RowFn>
void conv2d_row(const Conv2dGeometry& g, int w, int ho, RowFn&& row, const double* weight,
                const double* bias, double* col, double* out, std::size_t out_stride) {
  const int wo = g.out_w(w);
  const int cin_g = g.cin / g.groups;
  const int cout_g = g.cout / g.groups;
  const int krows = g.col_rows();
  for (int grp = 0; grp < g.groups; ++grp) {
    // im2col for this group
    for (int ci = 0; ci < cin_g; ++ci) {
      for (int a = 0; a < g.kh; ++a) {
        const int hi = ho * g.sh - g.pad_top + a * g.dh;
        const double* src = row(grp * cin_g + ci, hi);
        for (int b = 0; b < g.kw; ++b) {
          double* dst = col + static_cast<std::size_t>((ci * g.kh + a) * g.kw + b) * wo;
          if (src == nullptr) {
            for (int o = 0; o < wo; ++o) dst[o] = 0.0;
            continue;
          }
          for (int o = 0; o < wo; ++o) {
            const int wi = o * g.sw - g.pad_left + b * g.dw;
            dst[o] = (wi >= 0 && wi < w) ? src[wi] : 0.0;
          }
        }
      }
    }
    const double* w_g = weight + static_cast<std::size_t>(grp) * cout_g * krows;
    for (int co = 0; co < cout_g; ++co) {
      double* dst = out + static_cast<std::size_t>(grp * cout_g + co) * out_stride;
      const double bv = bias ? bias[grp * cout_g + co] : 0.0;
      for (int o = 0; o < wo; ++o) dst[o] = bv;
      gemm_nn(1, wo, krows, w_g + static_cast<std::size_t>(co) * krows, col, dst);
    }
  }
}

/// Computes output frame t of a causal-time / transposed-frequency convolution.
/// `row(c, ti)` returns input frame ti of channel c (w values) or nullptr.
/// `z` needs cout*kw*w scratch, `xcol` needs cin*kh*w scratch. Output channel
/// rows are written `out_stride` apart.
template <class RowFn>
void conv_transpose_row(const ConvTransposeGeometry& g, int w, int t, RowFn&& row,
                        const double* weight, const double* bias, double* xcol, double* z,
                        double* out, std::size_t out_stride) {
  const int wo = g.out_w(w);
  for (int ci = 0; ci < g.cin; ++ci) {
    for (int a = 0; a < g.kh; ++a) {
      const double* src = row(ci, t - (g.kh - 1 - a));
      double* dst = xcol + static_cast<std::size_t>(ci * g.kh + a) * w;
      if (src == nullptr) {
        for (int i = 0; i < w; ++i) dst[i] = 0.0;
      } else {
        for (int i = 0; i < w; ++i) dst[i] = src[i];
      }
    }
  }
  const int zrows = g.cout * g.kw;
  for (std::size_t i = 0; i < static_cast<std::size_t>(zrows) * w; ++i) z[i] = 0.0;
  gemm_nn(zrows, w, g.cin * g.kh, weight, xcol, z);
  for (int co = 0; co < g.cout; ++co) {
    double* dst = out + static_cast<std::size_t>(co) * out_stride;
    const double bv = bias ? bias[co] : 0.0;
    for (int o = 0; o < wo; ++o) dst[o] = bv;
    for (int j = 0; j < g.kw; ++j) {
      const double* zr = z + static_cast<std::size_t>(co * g.kw + j) * w;
      for (int i = 0; i < w; ++i) {
        const int o = i * g.sw - g.crop_left + j;
        if (o >= 0 && o < wo) dst[o] += zr[i];
      }
    }
  }
}

}  // namespace bsplc::kernels
