#include "bsplc/kernels.hpp"

#include <cstring>

namespace bsplc::kernels {

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    const double* ai = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + static_cast<std::size_t>(p) * n;
#pragma omp simd
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int p = 0; p < k; ++p) {
    const double* ap = a + static_cast<std::size_t>(p) * m;
    const double* bp = b + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = ap[i];
      double* ci = c + static_cast<std::size_t>(i) * n;
#pragma omp simd
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

namespace serial {

namespace {

inline std::size_t idx4(int c1, int c2, int c3, int i0, int i1, int i2, int i3) {
  return ((static_cast<std::size_t>(i0) * c1 + i1) * c2 + i2) * c3 + i3;
}

}  // namespace

void conv2d_forward(const Conv2dGeometry& g, int batch, int h, int w, const double* x,
                    const double* weight, const double* bias, double* y) {
  const int ho_n = g.out_h(h), wo_n = g.out_w(w);
  const int cin_g = g.cin / g.groups, cout_g = g.cout / g.groups;
  for (int b = 0; b < batch; ++b)
    for (int co = 0; co < g.cout; ++co) {
      const int grp = co / cout_g;
      for (int ho = 0; ho < ho_n; ++ho)
        for (int wo = 0; wo < wo_n; ++wo) {
          double acc = bias ? bias[co] : 0.0;
          for (int ci = 0; ci < cin_g; ++ci)
            for (int a = 0; a < g.kh; ++a) {
              const int hi = ho * g.sh - g.pad_top + a * g.dh;
              if (hi < 0 || hi >= h) continue;
              for (int q = 0; q < g.kw; ++q) {
                const int wi = wo * g.sw - g.pad_left + q * g.dw;
                if (wi < 0 || wi >= w) continue;
                acc += weight[idx4(cin_g, g.kh, g.kw, co, ci, a, q)] *
                       x[idx4(g.cin, h, w, b, grp * cin_g + ci, hi, wi)];
              }
            }
          y[idx4(g.cout, ho_n, wo_n, b, co, ho, wo)] = acc;
        }
    }
}

void conv2d_backward(const Conv2dGeometry& g, int batch, int h, int w, const double* x,
                     const double* weight, const double* dy, double* dx, double* dweight,
                     double* dbias) {
  const int ho_n = g.out_h(h), wo_n = g.out_w(w);
  const int cin_g = g.cin / g.groups, cout_g = g.cout / g.groups;
  for (int b = 0; b < batch; ++b)
    for (int co = 0; co < g.cout; ++co) {
      const int grp = co / cout_g;
      for (int ho = 0; ho < ho_n; ++ho)
        for (int wo = 0; wo < wo_n; ++wo) {
          const double gy = dy[idx4(g.cout, ho_n, wo_n, b, co, ho, wo)];
          if (dbias) dbias[co] += gy;
          for (int ci = 0; ci < cin_g; ++ci)
            for (int a = 0; a < g.kh; ++a) {
              const int hi = ho * g.sh - g.pad_top + a * g.dh;
              if (hi < 0 || hi >= h) continue;
              for (int q = 0; q < g.kw; ++q) {
                const int wi = wo * g.sw - g.pad_left + q * g.dw;
                if (wi < 0 || wi >= w) continue;
                const std::size_t wi_idx = idx4(cin_g, g.kh, g.kw, co, ci, a, q);
                const std::size_t xi_idx = idx4(g.cin, h, w, b, grp * cin_g + ci, hi, wi);
                if (dweight) dweight[wi_idx] += gy * x[xi_idx];
                if (dx) dx[xi_idx] += gy * weight[wi_idx];
              }
            }
        }
    }
}

void conv_transpose_forward(const ConvTransposeGeometry& g, int batch, int h, int w,
                            const double* x, const double* weight, const double* bias, double* y) {
  const int wo_n = g.out_w(w);
  for (int b = 0; b < batch; ++b)
    for (int co = 0; co < g.cout; ++co)
      for (int t = 0; t < h; ++t)
        for (int o = 0; o < wo_n; ++o) y[idx4(g.cout, h, wo_n, b, co, t, o)] = bias ? bias[co] : 0.0;
  for (int b = 0; b < batch; ++b)
    for (int co = 0; co < g.cout; ++co)
      for (int q = 0; q < g.kw; ++q)
        for (int ci = 0; ci < g.cin; ++ci)
          for (int a = 0; a < g.kh; ++a) {
            const double wv = weight[idx4(g.kw, g.cin, g.kh, co, q, ci, a)];
            for (int t = 0; t < h; ++t) {
              const int ti = t - (g.kh - 1 - a);
              if (ti < 0) continue;
              for (int i = 0; i < w; ++i) {
                const int o = i * g.sw - g.crop_left + q;
                if (o < 0 || o >= wo_n) continue;
                y[idx4(g.cout, h, wo_n, b, co, t, o)] += wv * x[idx4(g.cin, h, w, b, ci, ti, i)];
              }
            }
          }
}

void conv_transpose_backward(const ConvTransposeGeometry& g, int batch, int h, int w,
                             const double* x, const double* weight, const double* dy, double* dx,
                             double* dweight, double* dbias) {
  const int wo_n = g.out_w(w);
  for (int b = 0; b < batch; ++b)
    for (int co = 0; co < g.cout; ++co) {
      if (dbias)
        for (int t = 0; t < h; ++t)
          for (int o = 0; o < wo_n; ++o) dbias[co] += dy[idx4(g.cout, h, wo_n, b, co, t, o)];
      for (int q = 0; q < g.kw; ++q)
        for (int ci = 0; ci < g.cin; ++ci)
          for (int a = 0; a < g.kh; ++a) {
            const std::size_t widx = idx4(g.kw, g.cin, g.kh, co, q, ci, a);
            for (int t = 0; t < h; ++t) {
              const int ti = t - (g.kh - 1 - a);
              if (ti < 0) continue;
              for (int i = 0; i < w; ++i) {
                const int o = i * g.sw - g.crop_left + q;
                if (o < 0 || o >= wo_n) continue;
                const double gy = dy[idx4(g.cout, h, wo_n, b, co, t, o)];
                const std::size_t xidx = idx4(g.cin, h, w, b, ci, ti, i);
                if (dweight) dweight[widx] += gy * x[xidx];
                if (dx) dx[xidx] += gy * weight[widx];
              }
            }
          }
    }
}

void linear_forward(int rows, int in, int out, const double* x, const double* weight,
                    const double* bias, double* y) {
  for (int r = 0; r < rows; ++r)
    for (int o = 0; o < out; ++o) {
      double acc = bias ? bias[o] : 0.0;
      for (int i = 0; i < in; ++i)
        acc += x[static_cast<std::size_t>(r) * in + i] * weight[static_cast<std::size_t>(o) * in + i];
      y[static_cast<std::size_t>(r) * out + o] = acc;
    }
}

void linear_backward(int rows, int in, int out, const double* x, const double* weight,
                     const double* dy, double* dx, double* dweight, double* dbias) {
  for (int r = 0; r < rows; ++r)
    for (int o = 0; o < out; ++o) {
      const double gy = dy[static_cast<std::size_t>(r) * out + o];
      if (dbias) dbias[o] += gy;
      for (int i = 0; i < in; ++i) {
        if (dweight) dweight[static_cast<std::size_t>(o) * in + i] += gy * x[static_cast<std::size_t>(r) * in + i];
        if (dx) dx[static_cast<std::size_t>(r) * in + i] += gy * weight[static_cast<std::size_t>(o) * in + i];
      }
    }
}

}  // namespace serial
}  // namespace bsplc::kernels
