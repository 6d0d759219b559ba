#include <algorithm>
#include <cmath>
#include <numeric>

#include "bsplc/ops.hpp"

namespace bsplc::ops {

using ad::Node;
using ad::Shape;
using ad::ShapeError;

namespace {

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + ad::shape_str(a.shape()) + " vs " +
                     ad::shape_str(b.shape()));
}

int norm_axis(const Var& a, int axis) {
  const int r = a.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("axis out of range for " + ad::shape_str(a.shape()));
  return axis;
}

// Elementwise unary op. `deriv(x, y)` is dy/dx.
template <class F, class D>
Var unary(const Var& a, F f, D deriv) {
  const auto& x = a.value();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  Node* pa = a.node();
  return ad::make_result(a.shape(), std::move(y), {a}, [pa, deriv](Node& out) {
    double* ga = pa->grad_data();
    const auto& xv = pa->value;
    for (std::size_t i = 0; i < xv.size(); ++i) ga[i] += out.grad[i] * deriv(xv[i], out.value[i]);
  });
}

// Splits a shape around `axis` into (outer, extent, inner).
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
  Node *pa = a.node(), *pb = b.node();
  return ad::make_result(a.shape(), std::move(y), {a, b}, [pa, pb](Node& out) {
    if (pa->requires_grad) {
      double* g = pa->grad_data();
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i];
    }
    if (pb->requires_grad) {
      double* g = pb->grad_data();
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] - b.value()[i];
  Node *pa = a.node(), *pb = b.node();
  return ad::make_result(a.shape(), std::move(y), {a, b}, [pa, pb](Node& out) {
    if (pa->requires_grad) {
      double* g = pa->grad_data();
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i];
    }
    if (pb->requires_grad) {
      double* g = pb->grad_data();
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] -= out.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
  Node *pa = a.node(), *pb = b.node();
  return ad::make_result(a.shape(), std::move(y), {a, b}, [pa, pb](Node& out) {
    if (pa->requires_grad) {
      double* g = pa->grad_data();
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      double* g = pb->grad_data();
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i] * pa->value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var elu(const Var& a, double alpha) {
  return unary(
      a, [alpha](double x) { return x > 0.0 ? x : alpha * std::expm1(x); },
      [alpha](double x, double y) { return x > 0.0 ? 1.0 : y + alpha; });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var abs(const Var& a) {
  return unary(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var log_eps(const Var& a, double eps) {
  return unary(
      a, [eps](double x) { return std::log(x + eps); },
      [eps](double x, double) { return 1.0 / (x + eps); });
}

Var pow_eps(const Var& a, double exponent, double eps) {
  return unary(
      a, [=](double x) { return std::pow(x + eps, exponent); },
      [=](double x, double y) { return exponent * y / (x + eps); });
}

Var sum(const Var& a) {
  const double s = std::accumulate(a.value().begin(), a.value().end(), 0.0);
  Node* pa = a.node();
  return ad::make_result({1}, {s}, {a}, [pa](Node& out) {
    double* g = pa->grad_data();
    const double go = out.grad[0];
    for (std::size_t i = 0; i < pa->value.size(); ++i) g[i] += go;
  });
}

Var mean(const Var& a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Var weighted_mean(const Var& a, const std::vector<double>& weights) {
  if (weights.size() != a.numel()) throw ShapeError("weighted_mean: weight count mismatch");
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(wsum > 0.0)) throw ShapeError("weighted_mean: weights sum to zero");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * a.value()[i];
  Node* pa = a.node();
  return ad::make_result({1}, {s / wsum}, {a}, [pa, weights, wsum](Node& out) {
    double* g = pa->grad_data();
    const double go = out.grad[0] / wsum;
    for (std::size_t i = 0; i < weights.size(); ++i) g[i] += go * weights[i];
  });
}

Var mean_axis(const Var& a, int axis) {
  axis = norm_axis(a, axis);
  const AxisSplit s = split_at(a.shape(), axis);
  Shape shape = a.shape();
  shape.erase(shape.begin() + axis);
  if (shape.empty()) shape = {1};
  std::vector<double> y(s.outer * s.inner, 0.0);
  const auto& x = a.value();
  const double inv = 1.0 / static_cast<double>(s.extent);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i) y[o * s.inner + i] += x[(o * s.extent + e) * s.inner + i];
  for (double& v : y) v *= inv;
  Node* pa = a.node();
  return ad::make_result(std::move(shape), std::move(y), {a}, [pa, s, inv](Node& out) {
    double* g = pa->grad_data();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t e = 0; e < s.extent; ++e)
        for (std::size_t i = 0; i < s.inner; ++i)
          g[(o * s.extent + e) * s.inner + i] += inv * out.grad[o * s.inner + i];
  });
}

Var cumulative_mean(const Var& a, int axis) {
  axis = norm_axis(a, axis);
  const AxisSplit s = split_at(a.shape(), axis);
  const auto& x = a.value();
  std::vector<double> y(x.size());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      double run = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        const std::size_t k = (o * s.extent + e) * s.inner + i;
        run += x[k];
        y[k] = run / static_cast<double>(e + 1);
      }
    }
  Node* pa = a.node();
  return ad::make_result(a.shape(), std::move(y), {a}, [pa, s](Node& out) {
    double* g = pa->grad_data();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        // d y_t / d x_e = 1/(t+1) for e <= t: suffix sums of grad/(t+1)
        double acc = 0.0;
        for (std::size_t e = s.extent; e-- > 0;) {
          const std::size_t k = (o * s.extent + e) * s.inner + i;
          acc += out.grad[k] / static_cast<double>(e + 1);
          g[k] += acc;
        }
      }
  });
}

Var reshape(const Var& a, Shape shape) {
  if (ad::numel(shape) != a.numel())
    throw ShapeError("reshape " + ad::shape_str(a.shape()) + " -> " + ad::shape_str(shape));
  Node* pa = a.node();
  return ad::make_result(std::move(shape), a.value(), {a}, [pa](Node& out) {
    double* g = pa->grad_data();
    for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i];
  });
}

Var permute(const Var& a, const std::vector<int>& perm) {
  const int r = a.rank();
  if (static_cast<int>(perm.size()) != r) throw ShapeError("permute: rank mismatch");
  const Shape& in = a.shape();
  Shape out_shape(r);
  for (int i = 0; i < r; ++i) out_shape[i] = in[perm[i]];
  std::vector<std::size_t> in_stride(r, 1);
  for (int i = r - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * in[i + 1];
  // stride in the input for each output axis
  std::vector<std::size_t> src_stride(r);
  for (int i = 0; i < r; ++i) src_stride[i] = in_stride[perm[i]];
  const std::size_t n = a.numel();
  std::vector<std::size_t> map(n);
  {
    std::vector<int> idx(r, 0);
    std::size_t src = 0;
    for (std::size_t k = 0; k < n; ++k) {
      map[k] = src;
      for (int d = r - 1; d >= 0; --d) {
        ++idx[d];
        src += src_stride[d];
        if (idx[d] < out_shape[d]) break;
        src -= src_stride[d] * idx[d];
        idx[d] = 0;
      }
    }
  }
  std::vector<double> y(n);
  const auto& x = a.value();
  for (std::size_t k = 0; k < n; ++k) y[k] = x[map[k]];
  Node* pa = a.node();
  return ad::make_result(std::move(out_shape), std::move(y), {a}, [pa, map = std::move(map)](Node& out) {
    double* g = pa->grad_data();
    for (std::size_t k = 0; k < map.size(); ++k) g[map[k]] += out.grad[k];
  });
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  axis = norm_axis(parts[0], axis);
  Shape shape = parts[0].shape();
  int total = 0;
  for (const Var& p : parts) {
    if (p.rank() != static_cast<int>(shape.size())) throw ShapeError("concat: rank mismatch");
    for (int d = 0; d < p.rank(); ++d)
      if (d != axis && p.shape()[d] != shape[d])
        throw ShapeError("concat: shape mismatch " + ad::shape_str(p.shape()) + " vs " + ad::shape_str(shape));
    total += p.shape()[axis];
  }
  shape[axis] = total;
  const AxisSplit s = split_at(shape, axis);
  std::vector<double> y(ad::numel(shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    const std::size_t ext = p.shape()[axis];
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(p.value().begin() + o * ext * s.inner, ext * s.inner, y.begin() + (o * s.extent + off) * s.inner);
    off += ext;
  }
  std::vector<Node*> nodes;
  for (const Var& p : parts) nodes.push_back(p.node());
  return ad::make_result(std::move(shape), std::move(y), parts, [nodes, offsets, s, axis](Node& out) {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      Node* p = nodes[k];
      if (!p->requires_grad) continue;
      double* g = p->grad_data();
      const std::size_t ext = p->shape[axis];
      for (std::size_t o = 0; o < s.outer; ++o) {
        const double* src = out.grad.data() + (o * s.extent + offsets[k]) * s.inner;
        double* dst = g + o * ext * s.inner;
        for (std::size_t i = 0; i < ext * s.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Var slice(const Var& a, int axis, int start, int length) {
  axis = norm_axis(a, axis);
  if (start < 0 || length < 0 || start + length > a.shape()[axis])
    throw ShapeError("slice out of range on " + ad::shape_str(a.shape()));
  const AxisSplit s = split_at(a.shape(), axis);
  Shape shape = a.shape();
  shape[axis] = length;
  std::vector<double> y(ad::numel(shape));
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(a.value().begin() + (o * s.extent + start) * s.inner, length * s.inner,
                y.begin() + o * length * s.inner);
  Node* pa = a.node();
  return ad::make_result(std::move(shape), std::move(y), {a}, [pa, s, start, length](Node& out) {
    double* g = pa->grad_data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      double* dst = g + (o * s.extent + start) * s.inner;
      const double* src = out.grad.data() + o * length * s.inner;
      for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
    }
  });
}

Var glu(const Var& a, int axis) {
  axis = norm_axis(a, axis);
  const AxisSplit s = split_at(a.shape(), axis);
  if (s.extent % 2) throw ShapeError("glu: odd extent on axis");
  const std::size_t half = s.extent / 2;
  Shape shape = a.shape();
  shape[axis] = static_cast<int>(half);
  std::vector<double> y(ad::numel(shape));
  std::vector<double> gate(y.size());
  const auto& x = a.value();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < half; ++e)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t k = (o * half + e) * s.inner + i;
        const double lin = x[(o * s.extent + e) * s.inner + i];
        const double gv = 1.0 / (1.0 + std::exp(-x[(o * s.extent + half + e) * s.inner + i]));
        gate[k] = gv;
        y[k] = lin * gv;
      }
  Node* pa = a.node();
  return ad::make_result(std::move(shape), std::move(y), {a}, [pa, s, half, gate = std::move(gate)](Node& out) {
    double* g = pa->grad_data();
    const auto& x = pa->value;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t e = 0; e < half; ++e)
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t k = (o * half + e) * s.inner + i;
          const std::size_t kl = (o * s.extent + e) * s.inner + i;
          const std::size_t kg = (o * s.extent + half + e) * s.inner + i;
          const double go = out.grad[k];
          g[kl] += go * gate[k];
          g[kg] += go * x[kl] * gate[k] * (1.0 - gate[k]);
        }
  });
}

Var film(const Var& x, const Var& gamma, const Var& beta) {
  if (x.rank() != 4) throw ShapeError("film: x must be [B,C,T,F]");
  const int B = x.dim(0), C = x.dim(1), T = x.dim(2), F = x.dim(3);
  const Shape mod{B, T, F};
  if (gamma.shape() != mod || beta.shape() != mod) throw ShapeError("film: modulation must be [B,T,F]");
  const std::size_t tf = static_cast<std::size_t>(T) * F;
  std::vector<double> y(x.numel());
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (std::size_t k = 0; k < tf; ++k) {
        const std::size_t xi = (static_cast<std::size_t>(b) * C + c) * tf + k;
        const std::size_t mi = static_cast<std::size_t>(b) * tf + k;
        y[xi] = x.value()[xi] * gamma.value()[mi] + beta.value()[mi];
      }
  Node *px = x.node(), *pg = gamma.node(), *pb = beta.node();
  return ad::make_result(x.shape(), std::move(y), {x, gamma, beta}, [=](Node& out) {
    double* gx = px->requires_grad ? px->grad_data() : nullptr;
    double* gg = pg->requires_grad ? pg->grad_data() : nullptr;
    double* gb = pb->requires_grad ? pb->grad_data() : nullptr;
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c)
        for (std::size_t k = 0; k < tf; ++k) {
          const std::size_t xi = (static_cast<std::size_t>(b) * C + c) * tf + k;
          const std::size_t mi = static_cast<std::size_t>(b) * tf + k;
          const double go = out.grad[xi];
          if (gx) gx[xi] += go * pg->value[mi];
          if (gg) gg[mi] += go * px->value[xi];
          if (gb) gb[mi] += go;
        }
  });
}

}  // namespace bsplc::ops
