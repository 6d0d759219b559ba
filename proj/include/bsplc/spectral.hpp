#pragma once

// STFT analysis/synthesis, power-law compression and the wide/high band split.
//
// Framing is causal: the signal is left-padded by one hop, so frame t covers
// samples [(t-1)*hop, (t+1)*hop) and never reads past (t+1)*hop.

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "bsplc/audio_io.hpp"

namespace bsplc::spectral {

inline constexpr int kFftSize = 960;
inline constexpr int kHop = 480;
inline constexpr int kBins = kFftSize / 2 + 1;  // 481, 50 Hz spacing
inline constexpr int kWideBins = 161;           // bins 0..160, 0-8 kHz
inline constexpr int kHighBins = kBins - kWideBins;  // bins 161..480

/// Unnormalised real FFT of a fixed size backed by FFTW. Execution is
/// thread-safe; instances are cached per size by fft_for().
class RealFft {
 public:
  explicit RealFft(int n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int size() const { return n_; }
  /// out[k] = sum_n in[n] e^{-2 pi i k n / N}, k = 0..N/2.
  void forward(const double* in, std::complex<double>* out) const;
  /// Hermitian inverse without 1/N: out[n] = sum over the full spectrum.
  /// Imaginary parts of the DC and Nyquist bins are ignored.
  void inverse(const std::complex<double>* in, double* out) const;

 private:
  int n_;
  void* fwd_;
  void* inv_;
};

const RealFft& fft_for(int n);

/// Periodic Hann window and its square root.
std::vector<double> hann(int n);
std::vector<double> sqrt_hann(int n);

struct StftConfig {
  int fft_size = kFftSize;
  int win_length = kFftSize;
  int hop = kHop;
  double compression = 0.3;

  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const;
  int bins() const { return fft_size / 2 + 1; }
};

struct ComplexSpectrogram {
  int frames = 0;
  int bins = 0;
  std::vector<std::complex<double>> data;  // [frames][bins]

  std::complex<double>& at(int t, int f) { return data[static_cast<std::size_t>(t) * bins + f]; }
  const std::complex<double>& at(int t, int f) const { return data[static_cast<std::size_t>(t) * bins + f]; }
};

/// Real-valued [frames][bins][2] tensor holding (re, im) pairs.
struct RealSpectrogram {
  int frames = 0;
  int bins = 0;
  std::vector<double> data;

  double& at(int t, int f, int c) { return data[(static_cast<std::size_t>(t) * bins + f) * 2 + c]; }
  double at(int t, int f, int c) const { return data[(static_cast<std::size_t>(t) * bins + f) * 2 + c]; }
};

/// Wide band [frames][161][2] and high band [frames][320][2].
struct CompressedBandPair {
  int frames = 0;
  std::vector<double> wide;
  std::vector<double> high;
};

/// ceil(length / hop)
int num_frames(std::size_t length, const StftConfig& cfg);

ComplexSpectrogram stft(std::span<const double> signal, const StftConfig& cfg);
ComplexSpectrogram stft(const Waveform& wave, const StftConfig& cfg);
/// Overlap-add synthesis. Returns `length` samples (frames*hop when 0).
Waveform istft(const ComplexSpectrogram& spec, const StftConfig& cfg, std::size_t length = 0);

RealSpectrogram compress(const ComplexSpectrogram& spec, double p);
ComplexSpectrogram decompress(const RealSpectrogram& comp, double p);

CompressedBandPair band_split(const RealSpectrogram& full);
RealSpectrogram band_merge(const CompressedBandPair& pair);

}  // namespace bsplc::spectral
