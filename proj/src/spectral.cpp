#include "bsplc/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace bsplc::spectral {

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::RealFft(int n) : n_(n) {
  if (n < 2) throw std::invalid_argument("RealFft: size must be >= 2");
  std::vector<double> buf(n);
  std::vector<std::complex<double>> spec(n / 2 + 1);
  std::lock_guard<std::mutex> lock(planner_mutex());
  fwd_ = fftw_plan_dft_r2c_1d(n, buf.data(), reinterpret_cast<fftw_complex*>(spec.data()),
                              FFTW_ESTIMATE | FFTW_UNALIGNED);
  inv_ = fftw_plan_dft_c2r_1d(n, reinterpret_cast<fftw_complex*>(spec.data()), buf.data(),
                              FFTW_ESTIMATE | FFTW_UNALIGNED);
}

RealFft::~RealFft() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
  fftw_destroy_plan(static_cast<fftw_plan>(inv_));
}

void RealFft::forward(const double* in, std::complex<double>* out) const {
  // r2c plans never modify their input
  fftw_execute_dft_r2c(static_cast<fftw_plan>(fwd_), const_cast<double*>(in), reinterpret_cast<fftw_complex*>(out));
}

void RealFft::inverse(const std::complex<double>* in, double* out) const {
  // c2r destroys its input, so run on a copy
  std::vector<std::complex<double>> tmp(in, in + n_ / 2 + 1);
  tmp[0].imag(0.0);
  if (n_ % 2 == 0) tmp[n_ / 2].imag(0.0);
  fftw_execute_dft_c2r(static_cast<fftw_plan>(inv_), reinterpret_cast<fftw_complex*>(tmp.data()), out);
}

const RealFft& fft_for(int n) {
  static std::mutex m;
  static std::map<int, std::unique_ptr<RealFft>> cache;
  std::lock_guard<std::mutex> lock(m);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

std::vector<double> hann(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

std::vector<double> sqrt_hann(int n) {
  std::vector<double> w = hann(n);
  for (double& v : w) v = std::sqrt(v);
  return w;
}

void StftConfig::validate() const {
  if (fft_size < 2 || fft_size % 2) throw std::invalid_argument("StftConfig: fft_size must be even and >= 2");
  if (win_length != fft_size) throw std::invalid_argument("StftConfig: win_length must equal fft_size");
  if (hop * 2 != win_length) throw std::invalid_argument("StftConfig: hop must be win_length / 2");
  if (!(compression > 0.0 && compression <= 1.0))
    throw std::invalid_argument("StftConfig: compression exponent must be in (0, 1]");
}

int num_frames(std::size_t length, const StftConfig& cfg) {
  return static_cast<int>((length + cfg.hop - 1) / cfg.hop);
}

ComplexSpectrogram stft(std::span<const double> signal, const StftConfig& cfg) {
  cfg.validate();
  if (signal.empty()) throw std::invalid_argument("stft: empty input");
  const int n = cfg.fft_size;
  const std::vector<double> win = sqrt_hann(n);
  const RealFft& fft = fft_for(n);
  ComplexSpectrogram s;
  s.frames = num_frames(signal.size(), cfg);
  s.bins = cfg.bins();
  s.data.resize(static_cast<std::size_t>(s.frames) * s.bins);
  std::vector<double> frame(n);
  for (int t = 0; t < s.frames; ++t) {
    const long start = static_cast<long>(t) * cfg.hop - cfg.hop;
    for (int i = 0; i < n; ++i) {
      const long k = start + i;
      frame[i] = (k >= 0 && k < static_cast<long>(signal.size())) ? signal[k] * win[i] : 0.0;
    }
    fft.forward(frame.data(), s.data.data() + static_cast<std::size_t>(t) * s.bins);
  }
  return s;
}

ComplexSpectrogram stft(const Waveform& wave, const StftConfig& cfg) {
  return stft(std::span<const double>(wave.samples), cfg);
}

Waveform istft(const ComplexSpectrogram& spec, const StftConfig& cfg, std::size_t length) {
  cfg.validate();
  if (spec.bins != cfg.bins())
    throw std::invalid_argument("istft: spectrogram has " + std::to_string(spec.bins) + " bins, expected " +
                                std::to_string(cfg.bins()));
  const int n = cfg.fft_size;
  if (length == 0) length = static_cast<std::size_t>(spec.frames) * cfg.hop;
  const std::vector<double> win = sqrt_hann(n);
  const RealFft& fft = fft_for(n);
  Waveform out;
  out.samples.assign(length, 0.0);
  std::vector<double> frame(n);
  for (int t = 0; t < spec.frames; ++t) {
    fft.inverse(spec.data.data() + static_cast<std::size_t>(t) * spec.bins, frame.data());
    const long start = static_cast<long>(t) * cfg.hop - cfg.hop;
    for (int i = 0; i < n; ++i) {
      const long k = start + i;
      if (k >= 0 && k < static_cast<long>(length)) out.samples[k] += frame[i] * win[i] / n;
    }
  }
  return out;
}

RealSpectrogram compress(const ComplexSpectrogram& spec, double p) {
  RealSpectrogram r;
  r.frames = spec.frames;
  r.bins = spec.bins;
  r.data.resize(spec.data.size() * 2);
  for (std::size_t i = 0; i < spec.data.size(); ++i) {
    const double mag = std::abs(spec.data[i]);
    if (mag == 0.0) {
      r.data[2 * i] = r.data[2 * i + 1] = 0.0;
      continue;
    }
    const double s = std::pow(mag, p - 1.0);
    r.data[2 * i] = spec.data[i].real() * s;
    r.data[2 * i + 1] = spec.data[i].imag() * s;
  }
  return r;
}

ComplexSpectrogram decompress(const RealSpectrogram& comp, double p) {
  ComplexSpectrogram s;
  s.frames = comp.frames;
  s.bins = comp.bins;
  s.data.resize(comp.data.size() / 2);
  const double q = 1.0 / p;
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    const double re = comp.data[2 * i], im = comp.data[2 * i + 1];
    const double mag = std::hypot(re, im);
    if (mag == 0.0) {
      s.data[i] = 0.0;
      continue;
    }
    const double sc = std::pow(mag, q - 1.0);
    s.data[i] = {re * sc, im * sc};
  }
  return s;
}

CompressedBandPair band_split(const RealSpectrogram& full) {
  if (full.bins != kBins)
    throw std::invalid_argument("band_split: expected " + std::to_string(kBins) + " bins, got " +
                                std::to_string(full.bins));
  CompressedBandPair p;
  p.frames = full.frames;
  p.wide.resize(static_cast<std::size_t>(full.frames) * kWideBins * 2);
  p.high.resize(static_cast<std::size_t>(full.frames) * kHighBins * 2);
  for (int t = 0; t < full.frames; ++t) {
    const double* row = full.data.data() + static_cast<std::size_t>(t) * kBins * 2;
    std::copy(row, row + kWideBins * 2, p.wide.begin() + static_cast<std::size_t>(t) * kWideBins * 2);
    std::copy(row + kWideBins * 2, row + kBins * 2, p.high.begin() + static_cast<std::size_t>(t) * kHighBins * 2);
  }
  return p;
}

RealSpectrogram band_merge(const CompressedBandPair& pair) {
  const std::size_t t_n = static_cast<std::size_t>(pair.frames);
  if (pair.wide.size() != t_n * kWideBins * 2 || pair.high.size() != t_n * kHighBins * 2)
    throw std::invalid_argument("band_merge: band shapes inconsistent with frame count");
  RealSpectrogram full;
  full.frames = pair.frames;
  full.bins = kBins;
  full.data.resize(t_n * kBins * 2);
  for (std::size_t t = 0; t < t_n; ++t) {
    double* row = full.data.data() + t * kBins * 2;
    std::copy_n(pair.wide.begin() + t * kWideBins * 2, kWideBins * 2, row);
    std::copy_n(pair.high.begin() + t * kHighBins * 2, kHighBins * 2, row + kWideBins * 2);
  }
  return full;
}

}  // namespace bsplc::spectral
