#pragma once

// Differentiable ops on ad::Var. Shapes are checked eagerly and violations
// throw ad::ShapeError.

#include <vector>

#include "bsplc/kernels.hpp"
#include "bsplc/tensor.hpp"

namespace bsplc::ops {

using ad::Var;

// --- elementwise --------------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var elu(const Var& a, double alpha = 1.0);
Var leaky_relu(const Var& a, double slope);
Var abs(const Var& a);
Var square(const Var& a);
/// log(a + eps)
Var log_eps(const Var& a, double eps);
/// (a + eps)^exponent, for a >= 0
Var pow_eps(const Var& a, double exponent, double eps);

// --- reductions ---------------------------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);
/// sum(a * weights) / sum(weights); weights are constants with a's shape.
Var weighted_mean(const Var& a, const std::vector<double>& weights);
/// Mean over one axis; the axis is removed.
Var mean_axis(const Var& a, int axis);
/// Running mean along `axis`: out[..., t, ...] = mean(a[..., 0..t, ...]).
Var cumulative_mean(const Var& a, int axis);

// --- shape --------------------------------------------------------------------
Var reshape(const Var& a, ad::Shape shape);
Var permute(const Var& a, const std::vector<int>& perm);
Var concat(const std::vector<Var>& parts, int axis);
Var slice(const Var& a, int axis, int start, int length);

// --- gating / modulation ------------------------------------------------------
/// Splits `axis` in halves (a, b) and returns a * sigmoid(b).
Var glu(const Var& a, int axis);
/// x[B,C,T,F] * gamma[B,T,F] + beta[B,T,F], broadcast over C.
Var film(const Var& x, const Var& gamma, const Var& beta);

// --- layers -------------------------------------------------------------------
Var conv2d(const Var& x, const Var& weight, const Var& bias, const kernels::Conv2dGeometry& g);
Var conv_transpose(const Var& x, const Var& weight, const Var& bias,
                   const kernels::ConvTransposeGeometry& g);
/// x[..., I] * W[O,I]^T + b  ->  [..., O]. `bias` may be undefined.
Var linear(const Var& x, const Var& weight, const Var& bias);
/// Single-layer LSTM over x[N,L,I] with gate order (i,f,g,o); returns [N,L,H].
Var lstm(const Var& x, const Var& w_ih, const Var& w_hh, const Var& bias, bool reverse);
/// Single-layer GRU over x[N,L,I] with gate order (r,z,n); returns [N,L,H].
Var gru(const Var& x, const Var& w_ih, const Var& w_hh, const Var& b_ih, const Var& b_hh);

struct BatchStats {
  std::vector<double> mean;
  std::vector<double> var;  // biased
};
/// Batch normalisation over all axes except 1, using batch statistics.
Var batch_norm_train(const Var& x, const Var& gamma, const Var& beta, double eps, BatchStats* stats);
/// Batch normalisation with fixed statistics.
Var batch_norm_eval(const Var& x, const Var& gamma, const Var& beta, const std::vector<double>& mean,
                    const std::vector<double>& var, double eps);

// --- spectral -----------------------------------------------------------------
/// Inverse power-law compression on trailing (re, im) pairs: |c|^(1/p - 1) * c.
Var decompress(const Var& x, double p);
/// sqrt(re^2 + im^2 + eps) over trailing (re, im) pairs.
Var complex_abs(const Var& x, double eps);
/// re^2 + im^2 over trailing (re, im) pairs.
Var complex_power(const Var& x);

/// Windowed real FFT frames of wave[B,N] -> [B,frames,nfft/2+1,2]. Frame t
/// starts at sample t*hop - pad_left; samples outside [0,N) are zero.
Var stft(const Var& wave, const std::vector<double>& window, int hop, int pad_left, int frames);
/// Overlap-add synthesis of spec[B,T,F,2] -> [B,length]; frame t is placed at
/// t*hop - pad_left and multiplied by `window`.
Var istft(const Var& spec, const std::vector<double>& window, int hop, int pad_left, int length);

}  // namespace bsplc::ops
