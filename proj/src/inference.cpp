#include "bsplc/inference.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "bsplc/random.hpp"

namespace bsplc {

void DecayPolicy::validate() const {
  if (threshold_packets < 0) throw std::invalid_argument("decay threshold must be >= 0");
  if (!(decay_db_per_packet > 0.0)) throw std::invalid_argument("decay rate must be > 0 dB per packet");
  if (!(floor_db < 0.0)) throw std::invalid_argument("decay floor must be < 0 dB");
}

void SpliceConfig::validate() const {
  if (!(crossfade_ms >= 0.0) || crossfade_ms > 10.0)
    throw std::invalid_argument("crossfade must lie in [0, 10] ms");
}

int SpliceConfig::crossfade_samples() const { return static_cast<int>(std::lround(crossfade_ms * kSampleRate / 1000.0)); }

double gain_for_frame(int count, const DecayPolicy& policy) {
  if (count <= policy.threshold_packets) return 1.0;
  const double db = std::max(-policy.decay_db_per_packet * (count - policy.threshold_packets), policy.floor_db);
  return std::pow(10.0, db / 20.0);
}

LossTrace detect_lost_packets(const Waveform& lossy) {
  LossTrace trace;
  const std::size_t n = lossy.samples.size();
  trace.lost.resize(packets_for(n));
  for (std::size_t p = 0; p < trace.lost.size(); ++p) {
    const std::size_t end = std::min(n, (p + 1) * kPacketSamples);
    bool zero = true;
    for (std::size_t i = p * kPacketSamples; i < end && zero; ++i) zero = lossy.samples[i] == 0.0;
    trace.lost[p] = zero;
  }
  return trace;
}

std::vector<int> loss_run_counts(const LossTrace& trace) {
  std::vector<int> counts(trace.size());
  int run = 0;
  for (std::size_t p = 0; p < trace.size(); ++p) {
    run = trace.lost[p] ? run + 1 : 0;
    counts[p] = run;
  }
  return counts;
}

std::vector<bool> frame_loss_flags(const LossTrace& trace, int frames) {
  std::vector<bool> flags(frames, false);
  if (trace.size() == 0) return flags;
  for (int t = 0; t < frames; ++t) flags[t] = trace.lost[std::min<std::size_t>(t / 2, trace.size() - 1)];
  return flags;
}

Waveform splice(const Waveform& generated, const Waveform& original, const LossTrace& trace, const SpliceConfig& cfg) {
  const std::size_t n = original.samples.size();
  if (generated.samples.size() != n) throw std::invalid_argument("splice: length mismatch");
  if (trace.size() < packets_for(n)) throw std::invalid_argument("splice: trace shorter than audio");
  Waveform out = generated;
  const int fade = cfg.crossfade_samples();
  const std::size_t packets = packets_for(n);
  for (std::size_t p = 0; p < packets; ++p) {
    if (trace.lost[p]) continue;
    const std::size_t begin = p * kPacketSamples, end = std::min(n, begin + kPacketSamples);
    for (std::size_t i = begin; i < end; ++i) out.samples[i] = original.samples[i];
    if (fade == 0) continue;
    // fade in from the generated signal after a loss
    if (p > 0 && trace.lost[p - 1]) {
      for (int i = 0; i < fade && begin + i < end; ++i) {
        const double w = (i + 0.5) / fade;
        const std::size_t k = begin + i;
        out.samples[k] = w * original.samples[k] + (1.0 - w) * generated.samples[k];
      }
    }
    // fade out into the generated signal before a loss
    if (p + 1 < packets && trace.lost[p + 1]) {
      for (int i = 0; i < fade && end >= begin + i + 1; ++i) {
        const double w = (i + 0.5) / fade;
        const std::size_t k = end - 1 - i;
        out.samples[k] = w * original.samples[k] + (1.0 - w) * generated.samples[k];
      }
    }
  }
  return out;
}

Waveform conceal(const Generator& gen, const Waveform& lossy, const LossTrace* trace, const DecayPolicy& decay,
                 const SpliceConfig& splice_cfg) {
  validate(lossy);
  decay.validate();
  splice_cfg.validate();
  const std::size_t n = lossy.samples.size();
  LossTrace tr = trace ? *trace : detect_lost_packets(lossy);
  if (tr.size() < packets_for(n))
    throw std::invalid_argument("conceal: trace has " + std::to_string(tr.size()) + " packets, audio needs " +
                                std::to_string(packets_for(n)));
  if (n == 0) return lossy;

  // One extra hop at the end lets every input sample be covered by two frames.
  const spectral::StftConfig cfg;
  std::vector<double> padded(lossy.samples);
  padded.resize(n + cfg.hop, 0.0);
  const auto spec = spectral::stft(std::span<const double>(padded), cfg);
  const auto comp = spectral::compress(spec, cfg.compression);
  const int T = comp.frames;
  const auto flags = frame_loss_flags(tr, T);
  const auto runs = loss_run_counts(tr);

  spectral::RealSpectrogram out;
  out.frames = T;
  out.bins = spectral::kBins;
  out.data.resize(comp.data.size());
  GeneratorState state = gen.make_state();
  const std::size_t stride = 2 * spectral::kBins;
  for (int t = 0; t < T; ++t) {
    const auto frame = gen.streaming_step(state, comp.data.data() + t * stride, flags[t]);
    const int count = runs[std::min<std::size_t>(t / 2, runs.size() - 1)];
    // gain g on linear magnitudes is g^p on the compressed spectrum
    const double g = std::pow(gain_for_frame(count, decay), cfg.compression);
    for (std::size_t i = 0; i < stride; ++i) out.data[t * stride + i] = g * frame.spectrum[i];
  }
  Waveform generated = spectral::istft(spectral::decompress(out, cfg.compression), cfg, n + cfg.hop);
  generated.samples.resize(n);
  if (!splice_cfg.enabled) return generated;
  return splice(generated, lossy, tr, splice_cfg);
}

double measure_rtf(const Generator& gen, double seconds, int runs) {
  if (!(seconds > 0.0) || runs < 1) throw std::invalid_argument("measure_rtf: need positive duration and runs");
  const std::size_t n = static_cast<std::size_t>(seconds * kSampleRate);
  Waveform w;
  Rng rng(1234);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = 0.3 * std::sin(2.0 * std::numbers::pi * 180.0 * static_cast<double>(i) / kSampleRate) + 0.01 * rng.normal();
  GEParams ge;
  ge.p_gb = 0.1;
  ge.p_bg = 0.5;
  ge.seed = 99;
  const LossTrace tr = sample_trace(ge, packets_for(n));
  const Waveform lossy = apply_trace(w, tr);

  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  std::vector<double> times;
  try {
    for (int r = 0; r < runs; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      (void)conceal(gen, lossy, &tr);
      const auto t1 = std::chrono::steady_clock::now();
      times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
  } catch (...) {
    omp_set_num_threads(saved);
    throw;
  }
  omp_set_num_threads(saved);
  std::sort(times.begin(), times.end());
  return times[times.size() / 2] / seconds;
}

}  // namespace bsplc
