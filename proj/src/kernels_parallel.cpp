#include "bsplc/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstring>
#include <vector>

namespace bsplc::kernels::parallel {

namespace {

// Per-thread gradient accumulators. With one thread the caller's buffers are
// written directly; otherwise each thread gets a private zeroed copy that is
// summed into the caller's buffer at the end.
class Accumulator {
 public:
  Accumulator(double* target, std::size_t n, bool private_copy)
      : target_(target), n_(n), private_(private_copy && target != nullptr) {
    if (private_) local_.assign(n_, 0.0);
  }
  double* data() { return private_ ? local_.data() : target_; }
  void flush() {
    if (!private_) return;
#pragma omp critical(bsplc_accumulate)
    for (std::size_t i = 0; i < n_; ++i) target_[i] += local_[i];
  }

 private:
  double* target_;
  std::size_t n_;
  bool private_;
  std::vector<double> local_;
};

}  // namespace

void conv2d_forward(const Conv2dGeometry& g, int batch, int h, int w, const double* x,
                    const double* weight, const double* bias, double* y) {
  const int ho_n = g.out_h(h), wo_n = g.out_w(w);
  const std::size_t plane_in = static_cast<std::size_t>(h) * w;
  const std::size_t plane_out = static_cast<std::size_t>(ho_n) * wo_n;
#pragma omp parallel
  {
    std::vector<double> col(static_cast<std::size_t>(g.col_rows()) * wo_n);
#pragma omp for schedule(static)
    for (int r = 0; r < batch * ho_n; ++r) {
      const int b = r / ho_n, ho = r % ho_n;
      const double* xb = x + static_cast<std::size_t>(b) * g.cin * plane_in;
      auto row = [&](int c, int hi) -> const double* {
        if (hi < 0 || hi >= h) return nullptr;
        return xb + c * plane_in + static_cast<std::size_t>(hi) * w;
      };
      double* yb = y + static_cast<std::size_t>(b) * g.cout * plane_out +
                   static_cast<std::size_t>(ho) * wo_n;
      conv2d_row(g, w, ho, row, weight, bias, col.data(), yb, plane_out);
    }
  }
}

void conv2d_backward(const Conv2dGeometry& g, int batch, int h, int w, const double* x,
                     const double* weight, const double* dy, double* dx, double* dweight,
                     double* dbias) {
  const int ho_n = g.out_h(h), wo_n = g.out_w(w);
  const int cin_g = g.cin / g.groups, cout_g = g.cout / g.groups;
  const int krows = g.col_rows();
  const std::size_t plane_in = static_cast<std::size_t>(h) * w;
  const std::size_t plane_out = static_cast<std::size_t>(ho_n) * wo_n;
  const bool multi = omp_get_max_threads() > 1;
#pragma omp parallel
  {
    Accumulator acc_dx(dx, static_cast<std::size_t>(batch) * g.cin * plane_in, multi);
    Accumulator acc_dw(dweight, g.weight_size(), multi);
    Accumulator acc_db(dbias, static_cast<std::size_t>(g.cout), multi);
    double* ldx = acc_dx.data();
    double* ldw = acc_dw.data();
    double* ldb = acc_db.data();
    std::vector<double> col(static_cast<std::size_t>(krows) * wo_n);
    std::vector<double> dcol(col.size());
    std::vector<double> gy(static_cast<std::size_t>(cout_g) * wo_n);
#pragma omp for schedule(static)
    for (int r = 0; r < batch * ho_n; ++r) {
      const int b = r / ho_n, ho = r % ho_n;
      const double* dyb = dy + static_cast<std::size_t>(b) * g.cout * plane_out +
                          static_cast<std::size_t>(ho) * wo_n;
      for (int grp = 0; grp < g.groups; ++grp) {
        for (int co = 0; co < cout_g; ++co)
          std::memcpy(gy.data() + static_cast<std::size_t>(co) * wo_n,
                      dyb + static_cast<std::size_t>(grp * cout_g + co) * plane_out,
                      sizeof(double) * wo_n);
        if (ldb)
          for (int co = 0; co < cout_g; ++co) {
            double s = 0.0;
            for (int o = 0; o < wo_n; ++o) s += gy[static_cast<std::size_t>(co) * wo_n + o];
            ldb[grp * cout_g + co] += s;
          }
        // im2col for this group
        for (int ci = 0; ci < cin_g; ++ci)
          for (int a = 0; a < g.kh; ++a) {
            const int hi = ho * g.sh - g.pad_top + a * g.dh;
            const bool inside = hi >= 0 && hi < h;
            const double* src = inside ? x + (static_cast<std::size_t>(b) * g.cin + grp * cin_g + ci) * plane_in +
                                             static_cast<std::size_t>(hi) * w
                                       : nullptr;
            for (int q = 0; q < g.kw; ++q) {
              double* dst = col.data() + static_cast<std::size_t>((ci * g.kh + a) * g.kw + q) * wo_n;
              for (int o = 0; o < wo_n; ++o) {
                const int wi = o * g.sw - g.pad_left + q * g.dw;
                dst[o] = (inside && wi >= 0 && wi < w) ? src[wi] : 0.0;
              }
            }
          }
        const std::size_t woff = static_cast<std::size_t>(grp) * cout_g * krows;
        if (ldw) gemm_nt(cout_g, krows, wo_n, gy.data(), col.data(), ldw + woff);
        if (ldx) {
          std::fill(dcol.begin(), dcol.end(), 0.0);
          gemm_tn(krows, wo_n, cout_g, weight + woff, gy.data(), dcol.data());
          for (int ci = 0; ci < cin_g; ++ci)
            for (int a = 0; a < g.kh; ++a) {
              const int hi = ho * g.sh - g.pad_top + a * g.dh;
              if (hi < 0 || hi >= h) continue;
              double* dst = ldx + (static_cast<std::size_t>(b) * g.cin + grp * cin_g + ci) * plane_in +
                            static_cast<std::size_t>(hi) * w;
              for (int q = 0; q < g.kw; ++q) {
                const double* src = dcol.data() + static_cast<std::size_t>((ci * g.kh + a) * g.kw + q) * wo_n;
                for (int o = 0; o < wo_n; ++o) {
                  const int wi = o * g.sw - g.pad_left + q * g.dw;
                  if (wi >= 0 && wi < w) dst[wi] += src[o];
                }
              }
            }
        }
      }
    }
    acc_dx.flush();
    acc_dw.flush();
    acc_db.flush();
  }
}

void conv_transpose_forward(const ConvTransposeGeometry& g, int batch, int h, int w,
                            const double* x, const double* weight, const double* bias, double* y) {
  const int wo_n = g.out_w(w);
  const std::size_t plane_in = static_cast<std::size_t>(h) * w;
  const std::size_t plane_out = static_cast<std::size_t>(h) * wo_n;
#pragma omp parallel
  {
    std::vector<double> xcol(static_cast<std::size_t>(g.cin) * g.kh * w);
    std::vector<double> z(static_cast<std::size_t>(g.cout) * g.kw * w);
#pragma omp for schedule(static)
    for (int r = 0; r < batch * h; ++r) {
      const int b = r / h, t = r % h;
      const double* xb = x + static_cast<std::size_t>(b) * g.cin * plane_in;
      auto row = [&](int c, int ti) -> const double* {
        if (ti < 0 || ti >= h) return nullptr;
        return xb + c * plane_in + static_cast<std::size_t>(ti) * w;
      };
      double* yb = y + static_cast<std::size_t>(b) * g.cout * plane_out + static_cast<std::size_t>(t) * wo_n;
      conv_transpose_row(g, w, t, row, weight, bias, xcol.data(), z.data(), yb, plane_out);
    }
  }
}

void conv_transpose_backward(const ConvTransposeGeometry& g, int batch, int h, int w,
                             const double* x, const double* weight, const double* dy, double* dx,
                             double* dweight, double* dbias) {
  const int wo_n = g.out_w(w);
  const std::size_t plane_in = static_cast<std::size_t>(h) * w;
  const std::size_t plane_out = static_cast<std::size_t>(h) * wo_n;
  const int zrows = g.cout * g.kw;
  const int xrows = g.cin * g.kh;
  const bool multi = omp_get_max_threads() > 1;
#pragma omp parallel
  {
    Accumulator acc_dx(dx, static_cast<std::size_t>(batch) * g.cin * plane_in, multi);
    Accumulator acc_dw(dweight, g.weight_size(), multi);
    Accumulator acc_db(dbias, static_cast<std::size_t>(g.cout), multi);
    double* ldx = acc_dx.data();
    double* ldw = acc_dw.data();
    double* ldb = acc_db.data();
    std::vector<double> xcol(static_cast<std::size_t>(xrows) * w);
    std::vector<double> dxcol(xcol.size());
    std::vector<double> dz(static_cast<std::size_t>(zrows) * w);
#pragma omp for schedule(static)
    for (int r = 0; r < batch * h; ++r) {
      const int b = r / h, t = r % h;
      const double* dyb = dy + static_cast<std::size_t>(b) * g.cout * plane_out + static_cast<std::size_t>(t) * wo_n;
      for (int co = 0; co < g.cout; ++co) {
        const double* src = dyb + static_cast<std::size_t>(co) * plane_out;
        if (ldb) {
          double s = 0.0;
          for (int o = 0; o < wo_n; ++o) s += src[o];
          ldb[co] += s;
        }
        for (int j = 0; j < g.kw; ++j) {
          double* dst = dz.data() + static_cast<std::size_t>(co * g.kw + j) * w;
          for (int i = 0; i < w; ++i) {
            const int o = i * g.sw - g.crop_left + j;
            dst[i] = (o >= 0 && o < wo_n) ? src[o] : 0.0;
          }
        }
      }
      for (int ci = 0; ci < g.cin; ++ci)
        for (int a = 0; a < g.kh; ++a) {
          const int ti = t - (g.kh - 1 - a);
          double* dst = xcol.data() + static_cast<std::size_t>(ci * g.kh + a) * w;
          if (ti < 0) {
            std::fill(dst, dst + w, 0.0);
          } else {
            std::memcpy(dst, x + (static_cast<std::size_t>(b) * g.cin + ci) * plane_in + static_cast<std::size_t>(ti) * w,
                        sizeof(double) * w);
          }
        }
      if (ldw) gemm_nt(zrows, xrows, w, dz.data(), xcol.data(), ldw);
      if (ldx) {
        std::fill(dxcol.begin(), dxcol.end(), 0.0);
        gemm_tn(xrows, w, zrows, weight, dz.data(), dxcol.data());
        for (int ci = 0; ci < g.cin; ++ci)
          for (int a = 0; a < g.kh; ++a) {
            const int ti = t - (g.kh - 1 - a);
            if (ti < 0) continue;
            double* dst = ldx + (static_cast<std::size_t>(b) * g.cin + ci) * plane_in + static_cast<std::size_t>(ti) * w;
            const double* src = dxcol.data() + static_cast<std::size_t>(ci * g.kh + a) * w;
            for (int i = 0; i < w; ++i) dst[i] += src[i];
          }
      }
    }
    acc_dx.flush();
    acc_dw.flush();
    acc_db.flush();
  }
}

void linear_forward(int rows, int in, int out, const double* x, const double* weight,
                    const double* bias, double* y) {
  std::vector<double> wt(static_cast<std::size_t>(in) * out);
  for (int o = 0; o < out; ++o)
    for (int i = 0; i < in; ++i) wt[static_cast<std::size_t>(i) * out + o] = weight[static_cast<std::size_t>(o) * in + i];
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    double* yr = y + static_cast<std::size_t>(r) * out;
    for (int o = 0; o < out; ++o) yr[o] = bias ? bias[o] : 0.0;
    gemm_nn(1, out, in, x + static_cast<std::size_t>(r) * in, wt.data(), yr);
  }
}

void linear_backward(int rows, int in, int out, const double* x, const double* weight,
                     const double* dy, double* dx, double* dweight, double* dbias) {
  if (dx) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r)
      gemm_nn(1, in, out, dy + static_cast<std::size_t>(r) * out, weight, dx + static_cast<std::size_t>(r) * in);
  }
  if (dbias)
    for (int r = 0; r < rows; ++r)
      for (int o = 0; o < out; ++o) dbias[o] += dy[static_cast<std::size_t>(r) * out + o];
  if (dweight) {
    const bool multi = omp_get_max_threads() > 1;
#pragma omp parallel
    {
      Accumulator acc(dweight, static_cast<std::size_t>(in) * out, multi);
      double* ldw = acc.data();
      const int nt = omp_get_num_threads(), tid = omp_get_thread_num();
      const int chunk = (rows + nt - 1) / nt;
      const int r0 = std::min(rows, tid * chunk), r1 = std::min(rows, r0 + chunk);
      if (r1 > r0)
        gemm_tn(out, in, r1 - r0, dy + static_cast<std::size_t>(r0) * out, x + static_cast<std::size_t>(r0) * in, ldw);
      acc.flush();
    }
  }
}

}  // namespace bsplc::kernels::parallel
