#pragma once

// Objective quality measures used by validation, eval and the metric critic.

#include <span>

#include "bsplc/spectral.hpp"

namespace bsplc::metrics {

/// Reported ceiling for SI-SDR; perfect reconstructions would otherwise be +inf.
inline constexpr double kSdrCapDb = 60.0;

/// Scale-invariant SDR in dB. +inf when `est` is an exact multiple of `ref`.
/// Throws std::invalid_argument for unequal lengths or a zero-energy reference.
double si_sdr(std::span<const double> est, std::span<const double> ref);
double si_sdr_capped(std::span<const double> est, std::span<const double> ref);

/// Mean over frames of the RMS (over bins [bin_lo, bin_hi)) of the dB power
/// difference, with power floored at 1e-10.
double log_spectral_distance(const spectral::ComplexSpectrogram& est, const spectral::ComplexSpectrogram& ref,
                             int bin_lo, int bin_hi);

}  // namespace bsplc::metrics
