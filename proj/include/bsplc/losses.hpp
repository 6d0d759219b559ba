#pragma once

// Training objectives.
//
// Each loss exists twice: a plain double-precision function on the domain
// types (used by evaluation and as the readable definition), and a
// differentiable version on ad::Var used by the training step.

#include <functional>
#include <string>
#include <vector>

#include "bsplc/audio_io.hpp"
#include "bsplc/spectral.hpp"
#include "bsplc/tensor.hpp"

namespace bsplc {

struct LossWeights {
  double alpha = 0.1;    // f0 term
  double beta = 1e-3;    // linguistic term
  double adv_weight = 1.0;
  void validate() const;
};

struct LossReport {
  double plcpa = 0.0;
  double mae = 0.0;
  double f0 = 0.0;
  double linguistic = 0.0;
  double gan_g = 0.0;
  double metric_g = 0.0;
  double total = 0.0;
};

/// Relative weights of the magnitude and complex terms of the compressed
/// spectral loss.
struct PlcpaWeights {
  double amplitude = 1.0;
  double phase = 1.0;
};

class LossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean over (t,f) of amp*(|S|^p - |S'|^p)^2 + phase*| |S|^p e^{j<S} - |S'|^p e^{j<S'} |^2.
double plcpa_loss(const spectral::ComplexSpectrogram& est, const spectral::ComplexSpectrogram& ref, double p,
                  PlcpaWeights w = {});
double mae_time_loss(const Waveform& est, const Waveform& ref);
double f0_loss(const std::vector<double>& pred, const std::vector<double>& target);

/// Feature extractor for the linguistic term: waveform -> flat feature vector.
using LinguisticProvider = std::function<std::vector<double>(const Waveform&)>;

/// 64 triangular mel filters over bins 0..160 of the 960-point STFT
/// (0-8 kHz), row-major [64][161].
const std::vector<double>& mel_filterbank();
inline constexpr int kMelBands = 64;
inline constexpr double kLogFloor = 1e-10;
/// log(filterbank energy + 1e-10), frame-major [T][64].
std::vector<double> log_mel_features(const Waveform& wave);
double linguistic_loss(const Waveform& est, const Waveform& ref, const LinguisticProvider& provider = log_mel_features);

/// Mean over maps of mean (D(fake) - 1)^2.
double lsgan_g_loss(const std::vector<std::vector<double>>& fake_scores);
/// Mean over maps of [mean (D(real) - 1)^2 + mean D(fake)^2].
double lsgan_d_loss(const std::vector<std::vector<double>>& real_scores,
                    const std::vector<std::vector<double>>& fake_scores);
double metricgan_g_loss(double score_est);
double metricgan_d_loss(double score_clean_pair, double score_est_pair, double q_est);

/// Fills `total` from the addends. Throws LossError naming the first
/// non-finite term.
LossReport combine(const LossReport& terms, const LossWeights& w);

namespace losses {

using ad::Var;

/// Compressed spectra [...,2]. `frame_weights` (one per leading [B,T] frame)
/// restricts the mean to weighted frames; empty means uniform.
Var plcpa(const Var& est_c, const Var& ref_c, PlcpaWeights w = {}, const std::vector<double>& frame_weights = {});
/// Mean absolute difference; `weights` has the shape of `a` or is empty.
Var mae(const Var& a, const Var& b, const std::vector<double>& weights = {});
/// Log-mel features of wave [B,N] -> [B,T,64].
Var log_mel(const Var& wave);
Var linguistic(const Var& est_wave, const Var& ref_wave);
Var lsgan_g(const std::vector<Var>& fake);
Var lsgan_d(const std::vector<Var>& real, const std::vector<Var>& fake);
/// Scores [B]: mean (D - 1)^2.
Var metricgan_g(const Var& score_est);
/// Scores [B], q [B] constants.
Var metricgan_d(const Var& score_clean_pair, const Var& score_est_pair, const std::vector<double>& q);

}  // namespace losses

}  // namespace bsplc
