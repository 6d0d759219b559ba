#include <cmath>

#include "bsplc/kernels.hpp"

namespace bsplc::kernels {

namespace {
inline double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

std::vector<double> transpose(const double* m, int rows, int cols) {
  std::vector<double> t(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) t[static_cast<std::size_t>(c) * rows + r] = m[static_cast<std::size_t>(r) * cols + c];
  return t;
}

void lstm_cell(int n, int hidden, const double* whh_t, const double* h_prev, const double* c_prev,
               double* gates, double* h, double* c) {
  const int g4 = 4 * hidden;
  for (int r = 0; r < n; ++r) {
    double* gr = gates + static_cast<std::size_t>(r) * g4;
    gemm_nn(1, g4, hidden, h_prev + static_cast<std::size_t>(r) * hidden, whh_t, gr);
    const double* cp = c_prev + static_cast<std::size_t>(r) * hidden;
    double* hr = h + static_cast<std::size_t>(r) * hidden;
    double* cr = c + static_cast<std::size_t>(r) * hidden;
    for (int j = 0; j < hidden; ++j) {
      const double i = sigm(gr[j]);
      const double f = sigm(gr[hidden + j]);
      const double g = std::tanh(gr[2 * hidden + j]);
      const double o = sigm(gr[3 * hidden + j]);
      gr[j] = i;
      gr[hidden + j] = f;
      gr[2 * hidden + j] = g;
      gr[3 * hidden + j] = o;
      cr[j] = f * cp[j] + i * g;
      hr[j] = o * std::tanh(cr[j]);
    }
  }
}

void gru_cell(int n, int hidden, const double* whh_t, const double* b_hh, const double* xg,
              const double* h_prev, double* hg, double* rzn, double* h) {
  const int g3 = 3 * hidden;
  for (int r = 0; r < n; ++r) {
    double* hgr = hg + static_cast<std::size_t>(r) * g3;
    for (int j = 0; j < g3; ++j) hgr[j] = b_hh[j];
    const double* hp = h_prev + static_cast<std::size_t>(r) * hidden;
    gemm_nn(1, g3, hidden, hp, whh_t, hgr);
    const double* xr = xg + static_cast<std::size_t>(r) * g3;
    double* gr = rzn + static_cast<std::size_t>(r) * g3;
    double* hr = h + static_cast<std::size_t>(r) * hidden;
    for (int j = 0; j < hidden; ++j) {
      const double rg = sigm(xr[j] + hgr[j]);
      const double zg = sigm(xr[hidden + j] + hgr[hidden + j]);
      const double ng = std::tanh(xr[2 * hidden + j] + rg * hgr[2 * hidden + j]);
      gr[j] = rg;
      gr[hidden + j] = zg;
      gr[2 * hidden + j] = ng;
      hr[j] = (1.0 - zg) * ng + zg * hp[j];
    }
  }
}

}  // namespace bsplc::kernels
