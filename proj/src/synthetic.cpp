#include "bsplc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bsplc/random.hpp"

namespace bsplc {

Waveform synthetic_speech(double seconds, std::uint64_t seed, SyntheticClipInfo* info) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const double fs = kSampleRate;
  const std::size_t n = static_cast<std::size_t>(std::lround(seconds * fs));
  Rng rng(seed);
  const double f0 = rng.uniform(90.0, 220.0);
  const double glide = rng.uniform(-0.15, 0.15);
  const double vib_rate = rng.uniform(3.0, 6.0), vib_depth = rng.uniform(0.02, 0.06), vib_phase = rng.uniform(0.0, kTwoPi);
  const double formants[3] = {rng.uniform(300.0, 800.0), rng.uniform(900.0, 2200.0), rng.uniform(2400.0, 3200.0)};
  const double widths[3] = {90.0, 140.0, 200.0};
  const double syl_rate = rng.uniform(3.0, 5.0), syl_phase = rng.uniform(0.0, kTwoPi);
  const double burst_rate = rng.uniform(1.0, 2.5), burst_phase = rng.uniform(0.0, kTwoPi);

  Waveform w;
  w.samples.assign(n, 0.0);
  const int max_h = static_cast<int>(16000.0 / f0);
  std::vector<double> amps(max_h + 1), phase(max_h + 1);
  for (int h = 1; h <= max_h; ++h) phase[h] = rng.uniform(0.0, kTwoPi);
  double theta = 0.0;
  double hp_prev_in = 0.0, hp_prev_out = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double f = f0 * (1.0 + glide * t / std::max(seconds, 1e-9)) * (1.0 + vib_depth * std::sin(kTwoPi * vib_rate * t + vib_phase));
    theta += kTwoPi * f / fs;
    const double syl = std::sin(kTwoPi * syl_rate * t + syl_phase);
    const double env = syl > 0.0 ? std::sqrt(syl) : 0.0;
    double v = 0.0;
    if (env > 0.0) {
      for (int h = 1; h <= max_h; ++h) {
        const double fh = h * f;
        if (fh > 16000.0) break;
        double a = 0.0;
        for (int k = 0; k < 3; ++k) {
          const double d = (fh - formants[k]) / widths[k];
          a += std::exp(-0.5 * d * d) / (k + 1);
        }
        a = (a + 0.02) / h;
        v += a * std::sin(h * theta + phase[h]);
      }
    }
    // fricative bursts: high-passed noise gated between syllables
    const double noise = rng.normal();
    const double hp = 0.6 * (hp_prev_out + noise - hp_prev_in);
    hp_prev_in = noise;
    hp_prev_out = hp;
    const double b = std::sin(kTwoPi * burst_rate * t + burst_phase);
    const double burst = (b > 0.7 && env < 0.3) ? 0.05 * hp : 0.0;
    w.samples[i] = env * v + burst + 0.002 * noise;
  }
  double peak = 0.0;
  for (double s : w.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.0)
    for (double& s : w.samples) s *= 0.5 / peak;
  if (info) info->base_f0 = f0;
  return w;
}

std::vector<Waveform> synthetic_corpus(int count, double seconds, std::uint64_t seed) {
  std::vector<Waveform> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(synthetic_speech(seconds, derive_seed(seed, 0x73796e, i)));
  return out;
}

}  // namespace bsplc
