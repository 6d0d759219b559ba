#include "bsplc/losses.hpp"

#include <cmath>
#include <mutex>
#include <stdexcept>

#include "bsplc/ops.hpp"

namespace bsplc {

namespace {

constexpr double kAbsEps = 1e-12;

double mel(double hz) { return 1127.0 * std::log1p(hz / 700.0); }
double mel_to_hz(double m) { return 700.0 * std::expm1(m / 1127.0); }

std::vector<double> build_filterbank() {
  constexpr int bins = spectral::kWideBins;
  const double bin_hz = static_cast<double>(kSampleRate) / spectral::kFftSize;
  const double top = mel((bins - 1) * bin_hz);
  std::vector<double> edges(kMelBands + 2);
  for (int i = 0; i < kMelBands + 2; ++i) edges[i] = mel_to_hz(top * i / (kMelBands + 1));
  std::vector<double> fb(static_cast<std::size_t>(kMelBands) * bins, 0.0);
  for (int m = 0; m < kMelBands; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    bool any = false;
    for (int k = 0; k < bins; ++k) {
      const double f = k * bin_hz;
      const double w = std::max(0.0, std::min((f - lo) / (mid - lo), (hi - f) / (hi - mid)));
      fb[static_cast<std::size_t>(m) * bins + k] = w;
      any = any || w > 0.0;
    }
    if (!any) throw std::logic_error("mel filterbank: empty band " + std::to_string(m));
  }
  return fb;
}

void check_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": size mismatch (" + std::to_string(a) + " vs " +
                                          std::to_string(b) + ")");
}

}  // namespace

void LossWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(adv_weight >= 0.0))
    throw std::invalid_argument("loss weights must be non-negative");
}

double plcpa_loss(const spectral::ComplexSpectrogram& est, const spectral::ComplexSpectrogram& ref, double p,
                  PlcpaWeights w) {
  if (est.frames != ref.frames || est.bins != ref.bins) throw std::invalid_argument("plcpa_loss: shape mismatch");
  if (est.data.empty()) return 0.0;
  auto compress = [p](std::complex<double> s) {
    const double m = std::abs(s);
    return m > 0.0 ? s * std::pow(m, p - 1.0) : std::complex<double>{};
  };
  double acc = 0.0;
  for (std::size_t i = 0; i < est.data.size(); ++i) {
    const std::complex<double> ce = compress(est.data[i]), cr = compress(ref.data[i]);
    const double da = std::abs(cr) - std::abs(ce);
    acc += w.amplitude * da * da + w.phase * std::norm(cr - ce);
  }
  return acc / static_cast<double>(est.data.size());
}

double mae_time_loss(const Waveform& est, const Waveform& ref) {
  check_same(est.samples.size(), ref.samples.size(), "mae_time_loss");
  if (est.samples.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < est.samples.size(); ++i) acc += std::abs(est.samples[i] - ref.samples[i]);
  return acc / static_cast<double>(est.samples.size());
}

double f0_loss(const std::vector<double>& pred, const std::vector<double>& target) {
  check_same(pred.size(), target.size(), "f0_loss");
  if (pred.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - target[i]);
  return acc / static_cast<double>(pred.size());
}

const std::vector<double>& mel_filterbank() {
  static const std::vector<double> fb = build_filterbank();
  return fb;
}

std::vector<double> log_mel_features(const Waveform& wave) {
  const auto spec = spectral::stft(wave, spectral::StftConfig{});
  const auto& fb = mel_filterbank();
  constexpr int bins = spectral::kWideBins;
  std::vector<double> out(static_cast<std::size_t>(spec.frames) * kMelBands);
  std::vector<double> power(bins);
  for (int t = 0; t < spec.frames; ++t) {
    for (int k = 0; k < bins; ++k) power[k] = std::norm(spec.at(t, k));
    for (int m = 0; m < kMelBands; ++m) {
      double e = 0.0;
      for (int k = 0; k < bins; ++k) e += fb[static_cast<std::size_t>(m) * bins + k] * power[k];
      out[static_cast<std::size_t>(t) * kMelBands + m] = std::log(e + kLogFloor);
    }
  }
  return out;
}

double linguistic_loss(const Waveform& est, const Waveform& ref, const LinguisticProvider& provider) {
  check_same(est.samples.size(), ref.samples.size(), "linguistic_loss");
  std::vector<double> fe, fr;
  try {
    fe = provider(est);
    fr = provider(ref);
  } catch (const std::exception& e) {
    throw LossError(std::string("linguistic feature provider failed: ") + e.what());
  }
  check_same(fe.size(), fr.size(), "linguistic_loss features");
  if (fe.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < fe.size(); ++i) acc += std::abs(fe[i] - fr[i]);
  return acc / static_cast<double>(fe.size());
}

double lsgan_g_loss(const std::vector<std::vector<double>>& fake_scores) {
  if (fake_scores.empty()) throw std::invalid_argument("lsgan_g_loss: no score maps");
  double total = 0.0;
  for (const auto& m : fake_scores) {
    if (m.empty()) throw std::invalid_argument("lsgan_g_loss: empty score map");
    double acc = 0.0;
    for (double s : m) acc += (s - 1.0) * (s - 1.0);
    total += acc / static_cast<double>(m.size());
  }
  return total / static_cast<double>(fake_scores.size());
}

double lsgan_d_loss(const std::vector<std::vector<double>>& real_scores,
                    const std::vector<std::vector<double>>& fake_scores) {
  if (real_scores.empty() || real_scores.size() != fake_scores.size())
    throw std::invalid_argument("lsgan_d_loss: need matching non-empty score map lists");
  double total = 0.0;
  for (std::size_t i = 0; i < real_scores.size(); ++i) {
    if (real_scores[i].empty() || fake_scores[i].empty()) throw std::invalid_argument("lsgan_d_loss: empty score map");
    double r = 0.0, f = 0.0;
    for (double s : real_scores[i]) r += (s - 1.0) * (s - 1.0);
    for (double s : fake_scores[i]) f += s * s;
    total += r / static_cast<double>(real_scores[i].size()) + f / static_cast<double>(fake_scores[i].size());
  }
  return total / static_cast<double>(real_scores.size());
}

double metricgan_g_loss(double score_est) { return (score_est - 1.0) * (score_est - 1.0); }

double metricgan_d_loss(double score_clean_pair, double score_est_pair, double q_est) {
  return (score_clean_pair - 1.0) * (score_clean_pair - 1.0) + (score_est_pair - q_est) * (score_est_pair - q_est);
}

LossReport combine(const LossReport& terms, const LossWeights& w) {
  const std::pair<const char*, double> named[] = {{"plcpa", terms.plcpa},         {"mae", terms.mae},
                                                  {"f0", terms.f0},               {"linguistic", terms.linguistic},
                                                  {"gan_g", terms.gan_g},         {"metric_g", terms.metric_g}};
  for (const auto& [name, v] : named)
    if (!std::isfinite(v)) throw LossError(std::string("non-finite loss term '") + name + "'");
  LossReport r = terms;
  r.total = terms.plcpa + terms.mae + w.alpha * terms.f0 + w.beta * terms.linguistic +
            w.adv_weight * (terms.gan_g + terms.metric_g);
  return r;
}

namespace losses {

Var plcpa(const Var& est_c, const Var& ref_c, PlcpaWeights w, const std::vector<double>& frame_weights) {
  if (est_c.shape() != ref_c.shape()) throw ad::ShapeError("plcpa: shape mismatch");
  const Var amp = ops::square(ops::sub(ops::complex_abs(est_c, kAbsEps), ops::complex_abs(ref_c, kAbsEps)));
  const Var cplx = ops::complex_power(ops::sub(est_c, ref_c));
  const Var per_bin = ops::add(ops::scale(amp, w.amplitude), ops::scale(cplx, w.phase));
  if (frame_weights.empty()) return ops::mean(per_bin);
  if (est_c.rank() < 3) throw ad::ShapeError("plcpa: frame weights need [B,T,F,2] input");
  const std::size_t per_frame = per_bin.numel() / frame_weights.size();
  if (per_frame * frame_weights.size() != per_bin.numel()) throw ad::ShapeError("plcpa: frame weight count");
  std::vector<double> wts(per_bin.numel());
  for (std::size_t i = 0; i < wts.size(); ++i) wts[i] = frame_weights[i / per_frame];
  return ops::weighted_mean(per_bin, wts);
}

Var mae(const Var& a, const Var& b, const std::vector<double>& weights) {
  const Var d = ops::abs(ops::sub(a, b));
  return weights.empty() ? ops::mean(d) : ops::weighted_mean(d, weights);
}

Var log_mel(const Var& wave) {
  if (wave.rank() != 2) throw ad::ShapeError("log_mel: wave must be [B,N]");
  static const std::vector<double> window = spectral::sqrt_hann(spectral::kFftSize);
  static const Var fb({kMelBands, spectral::kWideBins}, mel_filterbank());
  const int frames = (wave.dim(1) + spectral::kHop - 1) / spectral::kHop;
  Var spec = ops::stft(wave, window, spectral::kHop, spectral::kHop, frames);
  Var power = ops::complex_power(ops::slice(spec, 2, 0, spectral::kWideBins));
  return ops::log_eps(ops::linear(power, fb, Var()), kLogFloor);
}

Var linguistic(const Var& est_wave, const Var& ref_wave) {
  if (est_wave.shape() != ref_wave.shape()) throw ad::ShapeError("linguistic: shape mismatch");
  return mae(log_mel(est_wave), log_mel(ref_wave));
}

Var lsgan_g(const std::vector<Var>& fake) {
  if (fake.empty()) throw std::invalid_argument("lsgan_g: no score maps");
  Var total;
  for (const auto& f : fake) {
    Var term = ops::mean(ops::square(ops::add_scalar(f, -1.0)));
    total = total.defined() ? ops::add(total, term) : term;
  }
  return ops::scale(total, 1.0 / static_cast<double>(fake.size()));
}

Var lsgan_d(const std::vector<Var>& real, const std::vector<Var>& fake) {
  if (real.empty() || real.size() != fake.size()) throw std::invalid_argument("lsgan_d: need matching score maps");
  Var total;
  for (std::size_t i = 0; i < real.size(); ++i) {
    Var term = ops::add(ops::mean(ops::square(ops::add_scalar(real[i], -1.0))), ops::mean(ops::square(fake[i])));
    total = total.defined() ? ops::add(total, term) : term;
  }
  return ops::scale(total, 1.0 / static_cast<double>(real.size()));
}

Var metricgan_g(const Var& score_est) { return ops::mean(ops::square(ops::add_scalar(score_est, -1.0))); }

Var metricgan_d(const Var& score_clean_pair, const Var& score_est_pair, const std::vector<double>& q) {
  if (score_clean_pair.shape() != score_est_pair.shape() || q.size() != score_est_pair.numel())
    throw ad::ShapeError("metricgan_d: score/target size mismatch");
  const Var target(score_est_pair.shape(), q);
  return ops::add(ops::mean(ops::square(ops::add_scalar(score_clean_pair, -1.0))),
                  ops::mean(ops::square(ops::sub(score_est_pair, target))));
}

}  // namespace losses

}  // namespace bsplc
