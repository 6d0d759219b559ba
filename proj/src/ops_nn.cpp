#include <cmath>
#include <cstring>

#include "bsplc/ops.hpp"

namespace bsplc::ops {

using ad::Node;
using ad::Shape;
using ad::ShapeError;

namespace {

double* grad_or_null(Node* n) { return (n && n->requires_grad) ? n->grad_data() : nullptr; }

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, const kernels::Conv2dGeometry& g) {
  if (x.rank() != 4 || x.dim(1) != g.cin)
    throw ShapeError("conv2d: input " + ad::shape_str(x.shape()) + " vs cin " + std::to_string(g.cin));
  if (g.cin % g.groups || g.cout % g.groups) throw ShapeError("conv2d: channels not divisible by groups");
  if (weight.numel() != g.weight_size()) throw ShapeError("conv2d: weight size mismatch");
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(g.cout))
    throw ShapeError("conv2d: bias size mismatch");
  const int B = x.dim(0), H = x.dim(2), W = x.dim(3);
  const int Ho = g.out_h(H), Wo = g.out_w(W);
  if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: input too small " + ad::shape_str(x.shape()));
  std::vector<double> y(static_cast<std::size_t>(B) * g.cout * Ho * Wo);
  kernels::parallel::conv2d_forward(g, B, H, W, x.data(), weight.data(), bias.defined() ? bias.data() : nullptr,
                                    y.data());
  Node *px = x.node(), *pw = weight.node(), *pb = bias.defined() ? bias.node() : nullptr;
  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return ad::make_result({B, g.cout, Ho, Wo}, std::move(y), parents, [=](Node& out) {
    kernels::parallel::conv2d_backward(g, B, H, W, px->value.data(), pw->value.data(), out.grad.data(),
                                       grad_or_null(px), grad_or_null(pw), grad_or_null(pb));
  });
}

Var conv_transpose(const Var& x, const Var& weight, const Var& bias, const kernels::ConvTransposeGeometry& g) {
  if (x.rank() != 4 || x.dim(1) != g.cin)
    throw ShapeError("conv_transpose: input " + ad::shape_str(x.shape()) + " vs cin " + std::to_string(g.cin));
  if (weight.numel() != g.weight_size()) throw ShapeError("conv_transpose: weight size mismatch");
  const int B = x.dim(0), H = x.dim(2), W = x.dim(3);
  const int Wo = g.out_w(W);
  std::vector<double> y(static_cast<std::size_t>(B) * g.cout * H * Wo);
  kernels::parallel::conv_transpose_forward(g, B, H, W, x.data(), weight.data(),
                                            bias.defined() ? bias.data() : nullptr, y.data());
  Node *px = x.node(), *pw = weight.node(), *pb = bias.defined() ? bias.node() : nullptr;
  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return ad::make_result({B, g.cout, H, Wo}, std::move(y), parents, [=](Node& out) {
    kernels::parallel::conv_transpose_backward(g, B, H, W, px->value.data(), pw->value.data(), out.grad.data(),
                                               grad_or_null(px), grad_or_null(pw), grad_or_null(pb));
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  if (weight.rank() != 2) throw ShapeError("linear: weight must be [O,I]");
  const int O = weight.dim(0), I = weight.dim(1);
  if (x.shape().back() != I)
    throw ShapeError("linear: input " + ad::shape_str(x.shape()) + " vs weight " + ad::shape_str(weight.shape()));
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(O)) throw ShapeError("linear: bias size");
  const int rows = static_cast<int>(x.numel() / I);
  Shape shape = x.shape();
  shape.back() = O;
  std::vector<double> y(static_cast<std::size_t>(rows) * O);
  kernels::parallel::linear_forward(rows, I, O, x.data(), weight.data(), bias.defined() ? bias.data() : nullptr,
                                    y.data());
  Node *px = x.node(), *pw = weight.node(), *pb = bias.defined() ? bias.node() : nullptr;
  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return ad::make_result(std::move(shape), std::move(y), parents, [=](Node& out) {
    kernels::parallel::linear_backward(rows, I, O, px->value.data(), pw->value.data(), out.grad.data(),
                                       grad_or_null(px), grad_or_null(pw), grad_or_null(pb));
  });
}

Var lstm(const Var& x, const Var& w_ih, const Var& w_hh, const Var& bias, bool reverse) {
  if (x.rank() != 3) throw ShapeError("lstm: input must be [N,L,I]");
  const int N = x.dim(0), L = x.dim(1), I = x.dim(2);
  const int H = w_hh.dim(1);
  const int G = 4 * H;
  if (w_ih.shape() != Shape{G, I} || w_hh.shape() != Shape{G, H} || bias.numel() != static_cast<std::size_t>(G))
    throw ShapeError("lstm: weight shapes do not match input " + ad::shape_str(x.shape()));
  const std::size_t NL = static_cast<std::size_t>(N) * L;
  std::vector<double> xg(NL * G);
  kernels::parallel::linear_forward(static_cast<int>(NL), I, G, x.data(), w_ih.data(), bias.data(), xg.data());
  const std::vector<double> whh_t = kernels::transpose(w_hh.data(), G, H);

  // per step (in time order t): activated gates and cell state, rows n
  auto acts = std::make_shared<std::vector<double>>(static_cast<std::size_t>(L) * N * G);
  auto cells = std::make_shared<std::vector<double>>(static_cast<std::size_t>(L) * N * H);
  std::vector<double> y(NL * H);
  std::vector<double> h_prev(static_cast<std::size_t>(N) * H, 0.0), c_prev(h_prev.size(), 0.0);
  std::vector<double> h_cur(h_prev.size());
  for (int s = 0; s < L; ++s) {
    const int t = reverse ? L - 1 - s : s;
    double* gates = acts->data() + static_cast<std::size_t>(t) * N * G;
    double* c_cur = cells->data() + static_cast<std::size_t>(t) * N * H;
    for (int n = 0; n < N; ++n)
      std::memcpy(gates + static_cast<std::size_t>(n) * G, xg.data() + (static_cast<std::size_t>(n) * L + t) * G,
                  sizeof(double) * G);
    kernels::lstm_cell(N, H, whh_t.data(), h_prev.data(), c_prev.data(), gates, h_cur.data(), c_cur);
    for (int n = 0; n < N; ++n)
      std::memcpy(y.data() + (static_cast<std::size_t>(n) * L + t) * H, h_cur.data() + static_cast<std::size_t>(n) * H,
                  sizeof(double) * H);
    h_prev = h_cur;
    std::memcpy(c_prev.data(), c_cur, sizeof(double) * N * H);
  }

  Node *px = x.node(), *pwi = w_ih.node(), *pwh = w_hh.node(), *pb = bias.node();
  return ad::make_result({N, L, H}, std::move(y), {x, w_ih, w_hh, bias}, [=](Node& out) {
    std::vector<double> dxg(NL * G, 0.0);
    std::vector<double> dh_next(static_cast<std::size_t>(N) * H, 0.0), dc_next(dh_next.size(), 0.0);
    std::vector<double> h_in(dh_next.size()), dpre(static_cast<std::size_t>(N) * G);
    double* dwhh = grad_or_null(pwh);
    for (int s = L - 1; s >= 0; --s) {
      const int t = reverse ? L - 1 - s : s;
      const int tp = reverse ? t + 1 : t - 1;  // previous step in processing order
      const bool first = s == 0;
      const double* gates = acts->data() + static_cast<std::size_t>(t) * N * G;
      const double* c_cur = cells->data() + static_cast<std::size_t>(t) * N * H;
      for (int n = 0; n < N; ++n)
        for (int j = 0; j < H; ++j) {
          const std::size_t nj = static_cast<std::size_t>(n) * H + j;
          h_in[nj] = first ? 0.0 : out.value[(static_cast<std::size_t>(n) * L + tp) * H + j];
          const double cp = first ? 0.0 : (*cells)[(static_cast<std::size_t>(tp) * N + n) * H + j];
          const double* gr = gates + static_cast<std::size_t>(n) * G;
          const double i = gr[j], f = gr[H + j], g = gr[2 * H + j], o = gr[3 * H + j];
          const double dh = out.grad[(static_cast<std::size_t>(n) * L + t) * H + j] + dh_next[nj];
          const double tc = std::tanh(c_cur[nj]);
          const double dc = dc_next[nj] + dh * o * (1.0 - tc * tc);
          double* dp = dpre.data() + static_cast<std::size_t>(n) * G;
          dp[j] = dc * g * i * (1.0 - i);
          dp[H + j] = dc * cp * f * (1.0 - f);
          dp[2 * H + j] = dc * i * (1.0 - g * g);
          dp[3 * H + j] = dh * tc * o * (1.0 - o);
          dc_next[nj] = dc * f;
        }
      for (int n = 0; n < N; ++n)
        std::memcpy(dxg.data() + (static_cast<std::size_t>(n) * L + t) * G, dpre.data() + static_cast<std::size_t>(n) * G,
                    sizeof(double) * G);
      if (dwhh && !first) kernels::gemm_tn(G, H, N, dpre.data(), h_in.data(), dwhh);
      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      kernels::gemm_nn(N, H, G, dpre.data(), pwh->value.data(), dh_next.data());
    }
    kernels::parallel::linear_backward(static_cast<int>(NL), I, G, px->value.data(), pwi->value.data(), dxg.data(),
                                       grad_or_null(px), grad_or_null(pwi), grad_or_null(pb));
  });
}

Var gru(const Var& x, const Var& w_ih, const Var& w_hh, const Var& b_ih, const Var& b_hh) {
  if (x.rank() != 3) throw ShapeError("gru: input must be [N,L,I]");
  const int N = x.dim(0), L = x.dim(1), I = x.dim(2);
  const int H = w_hh.dim(1);
  const int G = 3 * H;
  if (w_ih.shape() != Shape{G, I} || w_hh.shape() != Shape{G, H} || b_ih.numel() != static_cast<std::size_t>(G) ||
      b_hh.numel() != static_cast<std::size_t>(G))
    throw ShapeError("gru: weight shapes do not match input " + ad::shape_str(x.shape()));
  const std::size_t NL = static_cast<std::size_t>(N) * L;
  std::vector<double> xg(NL * G);
  kernels::parallel::linear_forward(static_cast<int>(NL), I, G, x.data(), w_ih.data(), b_ih.data(), xg.data());
  const std::vector<double> whh_t = kernels::transpose(w_hh.data(), G, H);

  auto acts = std::make_shared<std::vector<double>>(static_cast<std::size_t>(L) * N * G);
  auto hgs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(L) * N * G);
  std::vector<double> y(NL * H);
  std::vector<double> h_prev(static_cast<std::size_t>(N) * H, 0.0), h_cur(h_prev.size());
  std::vector<double> xg_t(static_cast<std::size_t>(N) * G);
  for (int t = 0; t < L; ++t) {
    for (int n = 0; n < N; ++n)
      std::memcpy(xg_t.data() + static_cast<std::size_t>(n) * G, xg.data() + (static_cast<std::size_t>(n) * L + t) * G,
                  sizeof(double) * G);
    kernels::gru_cell(N, H, whh_t.data(), b_hh.data(), xg_t.data(), h_prev.data(),
                      hgs->data() + static_cast<std::size_t>(t) * N * G, acts->data() + static_cast<std::size_t>(t) * N * G,
                      h_cur.data());
    for (int n = 0; n < N; ++n)
      std::memcpy(y.data() + (static_cast<std::size_t>(n) * L + t) * H, h_cur.data() + static_cast<std::size_t>(n) * H,
                  sizeof(double) * H);
    std::swap(h_prev, h_cur);
  }

  Node *px = x.node(), *pwi = w_ih.node(), *pwh = w_hh.node(), *pbi = b_ih.node(), *pbh = b_hh.node();
  return ad::make_result({N, L, H}, std::move(y), {x, w_ih, w_hh, b_ih, b_hh}, [=](Node& out) {
    std::vector<double> dxg(NL * G, 0.0);
    std::vector<double> dh_next(static_cast<std::size_t>(N) * H, 0.0), h_in(dh_next.size());
    std::vector<double> dhg(static_cast<std::size_t>(N) * G);
    double* dwhh = grad_or_null(pwh);
    double* dbhh = grad_or_null(pbh);
    for (int t = L - 1; t >= 0; --t) {
      const double* a = acts->data() + static_cast<std::size_t>(t) * N * G;
      const double* hg = hgs->data() + static_cast<std::size_t>(t) * N * G;
      for (int n = 0; n < N; ++n)
        for (int j = 0; j < H; ++j) {
          const std::size_t nj = static_cast<std::size_t>(n) * H + j;
          const double hp = t == 0 ? 0.0 : out.value[(static_cast<std::size_t>(n) * L + t - 1) * H + j];
          h_in[nj] = hp;
          const double* ar = a + static_cast<std::size_t>(n) * G;
          const double r = ar[j], z = ar[H + j], nv = ar[2 * H + j];
          const double hgn = hg[static_cast<std::size_t>(n) * G + 2 * H + j];
          const double dh = out.grad[(static_cast<std::size_t>(n) * L + t) * H + j] + dh_next[nj];
          const double dn_pre = dh * (1.0 - z) * (1.0 - nv * nv);
          const double dz_pre = dh * (hp - nv) * z * (1.0 - z);
          const double dr_pre = dn_pre * hgn * r * (1.0 - r);
          double* dx = dxg.data() + (static_cast<std::size_t>(n) * L + t) * G;
          dx[j] = dr_pre;
          dx[H + j] = dz_pre;
          dx[2 * H + j] = dn_pre;
          double* dg = dhg.data() + static_cast<std::size_t>(n) * G;
          dg[j] = dr_pre;
          dg[H + j] = dz_pre;
          dg[2 * H + j] = dn_pre * r;
          dh_next[nj] = dh * z;
        }
      if (dwhh && t > 0) kernels::gemm_tn(G, H, N, dhg.data(), h_in.data(), dwhh);
      if (dbhh)
        for (int n = 0; n < N; ++n)
          for (int k = 0; k < G; ++k) dbhh[k] += dhg[static_cast<std::size_t>(n) * G + k];
      kernels::gemm_nn(N, H, G, dhg.data(), pwh->value.data(), dh_next.data());
    }
    kernels::parallel::linear_backward(static_cast<int>(NL), I, G, px->value.data(), pwi->value.data(), dxg.data(),
                                       grad_or_null(px), grad_or_null(pwi), grad_or_null(pbi));
  });
}

namespace {

struct BnLayout {
  int n = 1, c = 1;
  std::size_t inner = 1;
};

BnLayout bn_layout(const Var& x) {
  if (x.rank() < 2) throw ShapeError("batch_norm: need at least [N,C]");
  BnLayout l;
  l.n = x.dim(0);
  l.c = x.dim(1);
  for (int d = 2; d < x.rank(); ++d) l.inner *= x.dim(d);
  return l;
}

}  // namespace

Var batch_norm_train(const Var& x, const Var& gamma, const Var& beta, double eps, BatchStats* stats) {
  const BnLayout l = bn_layout(x);
  if (gamma.numel() != static_cast<std::size_t>(l.c) || beta.numel() != static_cast<std::size_t>(l.c))
    throw ShapeError("batch_norm: affine size mismatch");
  const double m = static_cast<double>(l.n) * l.inner;
  std::vector<double> mean(l.c, 0.0), var(l.c, 0.0);
  const auto& xv = x.value();
  auto at = [&](int n, int c, std::size_t k) { return (static_cast<std::size_t>(n) * l.c + c) * l.inner + k; };
  for (int n = 0; n < l.n; ++n)
    for (int c = 0; c < l.c; ++c)
      for (std::size_t k = 0; k < l.inner; ++k) mean[c] += xv[at(n, c, k)];
  for (double& v : mean) v /= m;
  for (int n = 0; n < l.n; ++n)
    for (int c = 0; c < l.c; ++c)
      for (std::size_t k = 0; k < l.inner; ++k) {
        const double d = xv[at(n, c, k)] - mean[c];
        var[c] += d * d;
      }
  for (double& v : var) v /= m;
  std::vector<double> inv_std(l.c);
  for (int c = 0; c < l.c; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  std::vector<double> y(xv.size());
  for (int n = 0; n < l.n; ++n)
    for (int c = 0; c < l.c; ++c)
      for (std::size_t k = 0; k < l.inner; ++k) {
        const std::size_t i = at(n, c, k);
        (*xhat)[i] = (xv[i] - mean[c]) * inv_std[c];
        y[i] = gamma.value()[c] * (*xhat)[i] + beta.value()[c];
      }
  if (stats) {
    stats->mean = mean;
    stats->var = var;
  }
  Node *px = x.node(), *pg = gamma.node(), *pb = beta.node();
  return ad::make_result(x.shape(), std::move(y), {x, gamma, beta}, [=](Node& out) {
    double* gx = grad_or_null(px);
    double* gg = grad_or_null(pg);
    double* gb = grad_or_null(pb);
    for (int c = 0; c < l.c; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int n = 0; n < l.n; ++n)
        for (std::size_t k = 0; k < l.inner; ++k) {
          const std::size_t i = (static_cast<std::size_t>(n) * l.c + c) * l.inner + k;
          sum_dy += out.grad[i];
          sum_dy_xhat += out.grad[i] * (*xhat)[i];
        }
      if (gg) gg[c] += sum_dy_xhat;
      if (gb) gb[c] += sum_dy;
      if (!gx) continue;
      const double gm = pg->value[c];
      for (int n = 0; n < l.n; ++n)
        for (std::size_t k = 0; k < l.inner; ++k) {
          const std::size_t i = (static_cast<std::size_t>(n) * l.c + c) * l.inner + k;
          gx[i] += gm * inv_std[c] / m * (m * out.grad[i] - sum_dy - (*xhat)[i] * sum_dy_xhat);
        }
    }
  });
}

Var batch_norm_eval(const Var& x, const Var& gamma, const Var& beta, const std::vector<double>& mean,
                    const std::vector<double>& var, double eps) {
  const BnLayout l = bn_layout(x);
  if (mean.size() != static_cast<std::size_t>(l.c) || var.size() != static_cast<std::size_t>(l.c))
    throw ShapeError("batch_norm: statistics size mismatch");
  std::vector<double> scale_c(l.c), shift_c(l.c);
  for (int c = 0; c < l.c; ++c) {
    scale_c[c] = gamma.value()[c] / std::sqrt(var[c] + eps);
    shift_c[c] = beta.value()[c] - mean[c] * scale_c[c];
  }
  std::vector<double> y(x.numel());
  for (int n = 0; n < l.n; ++n)
    for (int c = 0; c < l.c; ++c)
      for (std::size_t k = 0; k < l.inner; ++k) {
        const std::size_t i = (static_cast<std::size_t>(n) * l.c + c) * l.inner + k;
        y[i] = x.value()[i] * scale_c[c] + shift_c[c];
      }
  Node *px = x.node(), *pg = gamma.node(), *pb = beta.node();
  return ad::make_result(x.shape(), std::move(y), {x, gamma, beta}, [=](Node& out) {
    double* gx = grad_or_null(px);
    double* gg = grad_or_null(pg);
    double* gb = grad_or_null(pb);
    for (int n = 0; n < l.n; ++n)
      for (int c = 0; c < l.c; ++c) {
        const double inv = 1.0 / std::sqrt(var[c] + eps);
        for (std::size_t k = 0; k < l.inner; ++k) {
          const std::size_t i = (static_cast<std::size_t>(n) * l.c + c) * l.inner + k;
          if (gx) gx[i] += out.grad[i] * scale_c[c];
          if (gg) gg[c] += out.grad[i] * (px->value[i] - mean[c]) * inv;
          if (gb) gb[c] += out.grad[i];
        }
      }
  });
}

}  // namespace bsplc::ops
