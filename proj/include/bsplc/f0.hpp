#pragma once

// Frame-synchronous pitch targets for the f0 auxiliary task.

#include <filesystem>
#include <vector>

#include "bsplc/audio_io.hpp"

namespace bsplc {

struct F0Options {
  int frame_hop = 480;
  double f0_min = 50.0;
  double f0_max = 500.0;
  double voicing_threshold = 0.5;  // minimum periodicity confidence
  double yin_threshold = 0.15;     // absolute threshold on the normalised difference
  int window = 960;                // integration window in samples
};

/// One value per 10 ms frame in Hz; 0 marks unvoiced frames.
struct F0Track {
  std::vector<double> values;
  double f0_max = 500.0;
};

/// YIN-style estimate per frame. Frame t analyses samples starting at
/// (t-1)*hop, matching the STFT frame grid.
F0Track extract_f0(const Waveform& wave, const F0Options& opts = {});

/// value / f0_max; unvoiced frames stay 0.
std::vector<double> normalize_f0(const F0Track& track);

/// Binary little-endian float32 vector stored next to the audio as <stem>.f0.
std::filesystem::path f0_cache_path(const std::filesystem::path& audio);
void write_f0_cache(const std::filesystem::path& path, const F0Track& track);
F0Track read_f0_cache(const std::filesystem::path& path, double f0_max = 500.0);

/// Returns the cached track for `audio` when present and of the expected
/// length, otherwise extracts it and writes the cache.
F0Track cached_f0(const std::filesystem::path& audio, const Waveform& wave, const F0Options& opts = {});

}  // namespace bsplc
