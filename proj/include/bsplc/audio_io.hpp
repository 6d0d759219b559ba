#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace bsplc {

inline constexpr int kSampleRate = 48000;

/// Mono 48 kHz signal with nominal amplitude range [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
  double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Raised for malformed or unsupported audio and for I/O failures.
class AudioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PcmFormat { kInt16, kFloat32 };

/// Reads a mono 48 kHz RIFF/WAVE file holding 16-bit PCM or 32-bit float samples.
/// Off-rate files are rejected with a "resample required" error.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& wave, PcmFormat format = PcmFormat::kInt16);

/// Checks the Waveform invariants (48 kHz, non-empty, finite).
void validate(const Waveform& wave);

/// Exact slice [start, start + length).
Waveform cut_segment(const Waveform& wave, std::int64_t start, std::int64_t length);

enum class Split { kTrain, kValid };

struct ManifestEntry {
  std::string path;
  std::int64_t num_samples = 0;
  Split split = Split::kTrain;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> subset(Split split) const;
};

/// Scans `root` recursively for .wav files at least one segment long and assigns
/// round(valid_fraction * N) of them to the validation split. The assignment
/// depends only on the sorted file list and the seed.
CorpusManifest build_manifest(const std::filesystem::path& root, double segment_seconds, double valid_fraction,
                              std::uint64_t seed);

/// Line-oriented persistence: `<path>\t<num_samples>\t<train|valid>`.
void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest);
CorpusManifest read_manifest(const std::filesystem::path& path);

}  // namespace bsplc
