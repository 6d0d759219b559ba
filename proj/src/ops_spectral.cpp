#include <cmath>
#include <complex>

#include "bsplc/ops.hpp"
#include "bsplc/spectral.hpp"

namespace bsplc::ops {

using ad::Node;
using ad::Shape;
using ad::ShapeError;

namespace {

void require_pairs(const Var& x, const char* op) {
  if (x.rank() < 1 || x.shape().back() != 2)
    throw ShapeError(std::string(op) + ": trailing axis must hold (re, im), got " + ad::shape_str(x.shape()));
}

Shape drop_last(const Shape& s) {
  Shape r(s.begin(), s.end() - 1);
  if (r.empty()) r = {1};
  return r;
}

}  // namespace

Var decompress(const Var& x, double p) {
  require_pairs(x, "decompress");
  const double q = 1.0 / p;
  const std::size_t n = x.numel() / 2;
  std::vector<double> y(x.numel());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < n; ++i) {
    const double a = xv[2 * i], b = xv[2 * i + 1];
    const double m = std::hypot(a, b);
    const double s = m > 0.0 ? std::pow(m, q - 1.0) : (q == 1.0 ? 1.0 : 0.0);
    y[2 * i] = a * s;
    y[2 * i + 1] = b * s;
  }
  Node* px = x.node();
  return ad::make_result(x.shape(), std::move(y), {x}, [px, q, n](Node& out) {
    double* g = px->grad_data();
    const auto& xv = px->value;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = xv[2 * i], b = xv[2 * i + 1];
      const double ga = out.grad[2 * i], gb = out.grad[2 * i + 1];
      const double m = std::hypot(a, b);
      if (m == 0.0) {
        if (q == 1.0) {
          g[2 * i] += ga;
          g[2 * i + 1] += gb;
        }
        continue;
      }
      // J = m^(q-1) I + (q-1) m^(q-3) c c^T
      const double s1 = std::pow(m, q - 1.0);
      const double s2 = (q - 1.0) * std::pow(m, q - 3.0) * (a * ga + b * gb);
      g[2 * i] += s1 * ga + s2 * a;
      g[2 * i + 1] += s1 * gb + s2 * b;
    }
  });
}

Var complex_abs(const Var& x, double eps) {
  require_pairs(x, "complex_abs");
  const std::size_t n = x.numel() / 2;
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = x.value()[2 * i], b = x.value()[2 * i + 1];
    y[i] = std::sqrt(a * a + b * b + eps);
  }
  Node* px = x.node();
  return ad::make_result(drop_last(x.shape()), std::move(y), {x}, [px, n](Node& out) {
    double* g = px->grad_data();
    for (std::size_t i = 0; i < n; ++i) {
      const double go = out.grad[i] / out.value[i];
      g[2 * i] += go * px->value[2 * i];
      g[2 * i + 1] += go * px->value[2 * i + 1];
    }
  });
}

Var complex_power(const Var& x) {
  require_pairs(x, "complex_power");
  const std::size_t n = x.numel() / 2;
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = x.value()[2 * i], b = x.value()[2 * i + 1];
    y[i] = a * a + b * b;
  }
  Node* px = x.node();
  return ad::make_result(drop_last(x.shape()), std::move(y), {x}, [px, n](Node& out) {
    double* g = px->grad_data();
    for (std::size_t i = 0; i < n; ++i) {
      g[2 * i] += 2.0 * out.grad[i] * px->value[2 * i];
      g[2 * i + 1] += 2.0 * out.grad[i] * px->value[2 * i + 1];
    }
  });
}

Var stft(const Var& wave, const std::vector<double>& window, int hop, int pad_left, int frames) {
  if (wave.rank() != 2) throw ShapeError("stft: wave must be [B,N]");
  const int B = wave.dim(0), N = wave.dim(1);
  const int nfft = static_cast<int>(window.size());
  const int F = nfft / 2 + 1;
  if (frames <= 0) throw ShapeError("stft: no frames");
  const spectral::RealFft& fft = spectral::fft_for(nfft);
  std::vector<double> y(static_cast<std::size_t>(B) * frames * F * 2);
  std::vector<double> buf(nfft);
  for (int b = 0; b < B; ++b) {
    const double* x = wave.data() + static_cast<std::size_t>(b) * N;
    for (int t = 0; t < frames; ++t) {
      const long start = static_cast<long>(t) * hop - pad_left;
      for (int i = 0; i < nfft; ++i) {
        const long k = start + i;
        buf[i] = (k >= 0 && k < N) ? x[k] * window[i] : 0.0;
      }
      fft.forward(buf.data(), reinterpret_cast<std::complex<double>*>(y.data() + (static_cast<std::size_t>(b) * frames + t) * F * 2));
    }
  }
  Node* pw = wave.node();
  return ad::make_result({B, frames, F, 2}, std::move(y), {wave}, [=, &fft](Node& out) {
    double* g = pw->grad_data();
    std::vector<std::complex<double>> h(F);
    std::vector<double> buf(nfft);
    for (int b = 0; b < B; ++b)
      for (int t = 0; t < frames; ++t) {
        const double* go = out.grad.data() + (static_cast<std::size_t>(b) * frames + t) * F * 2;
        for (int k = 0; k < F; ++k) {
          const bool edge = k == 0 || (nfft % 2 == 0 && k == nfft / 2);
          const double c = edge ? 1.0 : 0.5;
          h[k] = {c * go[2 * k], c * go[2 * k + 1]};
        }
        fft.inverse(h.data(), buf.data());
        const long start = static_cast<long>(t) * hop - pad_left;
        for (int i = 0; i < nfft; ++i) {
          const long k = start + i;
          if (k >= 0 && k < N) g[static_cast<std::size_t>(b) * N + k] += buf[i] * window[i];
        }
      }
  });
}

Var istft(const Var& spec, const std::vector<double>& window, int hop, int pad_left, int length) {
  if (spec.rank() != 4 || spec.dim(3) != 2) throw ShapeError("istft: spec must be [B,T,F,2]");
  const int B = spec.dim(0), T = spec.dim(1), F = spec.dim(2);
  const int nfft = static_cast<int>(window.size());
  if (F != nfft / 2 + 1) throw ShapeError("istft: bin count does not match window");
  const spectral::RealFft& fft = spectral::fft_for(nfft);
  std::vector<double> y(static_cast<std::size_t>(B) * length, 0.0);
  std::vector<double> buf(nfft);
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < T; ++t) {
      fft.inverse(reinterpret_cast<const std::complex<double>*>(spec.data() + (static_cast<std::size_t>(b) * T + t) * F * 2),
                  buf.data());
      const long start = static_cast<long>(t) * hop - pad_left;
      for (int i = 0; i < nfft; ++i) {
        const long k = start + i;
        if (k >= 0 && k < length) y[static_cast<std::size_t>(b) * length + k] += buf[i] * window[i] / nfft;
      }
    }
  Node* ps = spec.node();
  return ad::make_result({B, length}, std::move(y), {spec}, [=, &fft](Node& out) {
    double* g = ps->grad_data();
    std::vector<double> buf(nfft);
    std::vector<std::complex<double>> z(F);
    for (int b = 0; b < B; ++b)
      for (int t = 0; t < T; ++t) {
        const long start = static_cast<long>(t) * hop - pad_left;
        for (int i = 0; i < nfft; ++i) {
          const long k = start + i;
          buf[i] = (k >= 0 && k < length) ? out.grad[static_cast<std::size_t>(b) * length + k] * window[i] : 0.0;
        }
        fft.forward(buf.data(), z.data());
        double* gs = g + (static_cast<std::size_t>(b) * T + t) * F * 2;
        for (int k = 0; k < F; ++k) {
          const bool edge = k == 0 || (nfft % 2 == 0 && k == nfft / 2);
          const double c = (edge ? 1.0 : 2.0) / nfft;
          gs[2 * k] += c * z[k].real();
          gs[2 * k + 1] += edge ? 0.0 : c * z[k].imag();
        }
      }
  });
}

}  // namespace bsplc::ops
