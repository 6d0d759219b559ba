#include "bsplc/f0.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>

#include "bsplc/spectral.hpp"

namespace bsplc {

namespace {

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

F0Track extract_f0(const Waveform& wave, const F0Options& opts) {
  const int hop = opts.frame_hop;
  const int w = opts.window;
  const int tau_max = static_cast<int>(std::ceil(wave.sample_rate / opts.f0_min));
  const int tau_min = std::max(2, static_cast<int>(std::floor(wave.sample_rate / opts.f0_max)));
  const int seg = w + tau_max;
  const int m = next_pow2(seg + 1);
  const spectral::RealFft& fft = spectral::fft_for(m);

  const std::size_t n = wave.samples.size();
  const int frames = static_cast<int>((n + hop - 1) / hop);
  F0Track track;
  track.f0_max = opts.f0_max;
  track.values.assign(frames, 0.0);

  std::vector<double> x(seg), a(m), b(m), r(m), sq(seg + 1);
  std::vector<std::complex<double>> fa(m / 2 + 1), fb(m / 2 + 1);
  std::vector<double> d(tau_max + 2), dn(tau_max + 2);
  for (int t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t) * hop - hop;
    for (int i = 0; i < seg; ++i) {
      const long k = start + i;
      x[i] = (k >= 0 && k < static_cast<long>(n)) ? wave.samples[k] : 0.0;
    }
    sq[0] = 0.0;
    for (int i = 0; i < seg; ++i) sq[i + 1] = sq[i] + x[i] * x[i];
    const double e0 = sq[w];
    if (e0 < 1e-10) continue;

    std::fill(a.begin(), a.end(), 0.0);
    std::fill(b.begin(), b.end(), 0.0);
    std::copy_n(x.begin(), w, a.begin());
    std::copy_n(x.begin(), seg, b.begin());
    fft.forward(a.data(), fa.data());
    fft.forward(b.data(), fb.data());
    for (std::size_t k = 0; k < fa.size(); ++k) fa[k] = std::conj(fa[k]) * fb[k];
    fft.inverse(fa.data(), r.data());

    // cumulative mean normalised difference
    double run = 0.0;
    dn[0] = 1.0;
    for (int tau = 1; tau <= tau_max + 1 && tau < seg - w + 1; ++tau) {
      const double et = sq[tau + w] - sq[tau];
      d[tau] = std::max(0.0, e0 + et - 2.0 * r[tau] / m);
      run += d[tau];
      dn[tau] = run > 0.0 ? d[tau] * tau / run : 1.0;
    }
    const int last = std::min(tau_max, seg - w - 1);

    int best = -1;
    for (int tau = tau_min; tau <= last; ++tau) {
      if (dn[tau] < opts.yin_threshold) {
        while (tau + 1 <= last && dn[tau + 1] < dn[tau]) ++tau;
        best = tau;
        break;
      }
    }
    if (best < 0) {
      best = tau_min;
      for (int tau = tau_min; tau <= last; ++tau)
        if (dn[tau] < dn[best]) best = tau;
    }
    const double confidence = 1.0 - dn[best];
    if (confidence < opts.voicing_threshold) continue;

    double period = best;
    if (best > 1 && best < last) {
      const double l = dn[best - 1], c = dn[best], rr = dn[best + 1];
      const double den = l - 2.0 * c + rr;
      if (den > 0.0) period += 0.5 * (l - rr) / den;
    }
    track.values[t] = std::clamp(wave.sample_rate / period, opts.f0_min, opts.f0_max);
  }
  return track;
}

std::vector<double> normalize_f0(const F0Track& track) {
  std::vector<double> out(track.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = track.values[i] / track.f0_max;
  return out;
}

std::filesystem::path f0_cache_path(const std::filesystem::path& audio) {
  std::filesystem::path p = audio;
  p.replace_extension(".f0");
  return p;
}

void write_f0_cache(const std::filesystem::path& path, const F0Track& track) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw AudioError("cannot write f0 cache " + path.string());
  for (double v : track.values) {
    const float f = static_cast<float>(v);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    const unsigned char bytes[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                                    static_cast<unsigned char>(u >> 16), static_cast<unsigned char>(u >> 24)};
    os.write(reinterpret_cast<const char*>(bytes), 4);
  }
}

F0Track read_f0_cache(const std::filesystem::path& path, double f0_max) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError("cannot open f0 cache " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 4) throw AudioError("f0 cache size is not a multiple of 4: " + path.string());
  F0Track track;
  track.f0_max = f0_max;
  track.values.resize(bytes.size() / 4);
  for (std::size_t i = 0; i < track.values.size(); ++i) {
    const unsigned char* p = bytes.data() + 4 * i;
    const std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                            (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    float f;
    std::memcpy(&f, &u, 4);
    track.values[i] = f;
  }
  return track;
}

F0Track cached_f0(const std::filesystem::path& audio, const Waveform& wave, const F0Options& opts) {
  const auto cache = f0_cache_path(audio);
  const std::size_t frames = (wave.samples.size() + opts.frame_hop - 1) / opts.frame_hop;
  if (std::filesystem::exists(cache)) {
    F0Track t = read_f0_cache(cache, opts.f0_max);
    if (t.values.size() == frames) return t;
  }
  F0Track t = extract_f0(wave, opts);
  try {
    write_f0_cache(cache, t);
  } catch (const AudioError&) {
    // read-only corpus: keep the in-memory track
  }
  return t;
}

}  // namespace bsplc
