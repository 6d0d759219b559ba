#pragma once

// Speech-like test material: a glottal-style harmonic source with a moving
// pitch contour, three formant resonances, syllabic amplitude modulation and
// a noise floor with occasional fricative bursts above 4 kHz.

#include <cstdint>
#include <vector>

#include "bsplc/audio_io.hpp"

namespace bsplc {

struct SyntheticClipInfo {
  double base_f0 = 0.0;  // Hz
};

Waveform synthetic_speech(double seconds, std::uint64_t seed, SyntheticClipInfo* info = nullptr);

/// `count` clips with independent seeds derived from `seed`.
std::vector<Waveform> synthetic_corpus(int count, double seconds, std::uint64_t seed);

}  // namespace bsplc
