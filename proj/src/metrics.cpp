#include "bsplc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bsplc::metrics {

double si_sdr(std::span<const double> est, std::span<const double> ref) {
  if (est.size() != ref.size()) throw std::invalid_argument("si_sdr: length mismatch");
  double rr = 0.0, er = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    rr += ref[i] * ref[i];
    er += est[i] * ref[i];
  }
  if (rr <= 0.0) throw std::invalid_argument("si_sdr: reference has zero energy");
  const double alpha = er / rr;
  double target = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double s = alpha * ref[i];
    const double e = est[i] - s;
    target += s * s;
    noise += e * e;
  }
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  if (target == 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(target / noise);
}

double si_sdr_capped(std::span<const double> est, std::span<const double> ref) {
  return std::min(si_sdr(est, ref), kSdrCapDb);
}

double log_spectral_distance(const spectral::ComplexSpectrogram& est, const spectral::ComplexSpectrogram& ref,
                             int bin_lo, int bin_hi) {
  if (est.frames != ref.frames || est.bins != ref.bins)
    throw std::invalid_argument("log_spectral_distance: spectrogram shapes differ");
  if (bin_lo < 0 || bin_hi > est.bins || bin_lo >= bin_hi)
    throw std::invalid_argument("log_spectral_distance: bad bin range");
  if (est.frames == 0) return 0.0;
  constexpr double kFloor = 1e-10;
  double total = 0.0;
  for (int t = 0; t < est.frames; ++t) {
    double acc = 0.0;
    for (int f = bin_lo; f < bin_hi; ++f) {
      const double pe = std::max(std::norm(est.at(t, f)), kFloor);
      const double pr = std::max(std::norm(ref.at(t, f)), kFloor);
      const double d = 10.0 * std::log10(pe / pr);
      acc += d * d;
    }
    total += std::sqrt(acc / (bin_hi - bin_lo));
  }
  return total / est.frames;
}

}  // namespace bsplc::metrics
