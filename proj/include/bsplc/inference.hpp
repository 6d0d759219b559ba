#pragma once

// Causal concealment pipeline: STFT -> compress -> streaming generator ->
// gain decay -> decompress -> overlap-add -> splice received audio back in.

#include <vector>

#include "bsplc/generator.hpp"
#include "bsplc/loss_channel.hpp"

namespace bsplc {

struct DecayPolicy {
  int threshold_packets = 7;
  double decay_db_per_packet = 3.0;
  double floor_db = -30.0;
  void validate() const;
};

struct SpliceConfig {
  bool enabled = true;
  double crossfade_ms = 5.0;
  void validate() const;
  int crossfade_samples() const;
};

/// Linear gain for the `count`-th consecutive lost packet (0 = received).
double gain_for_frame(int count, const DecayPolicy& policy);

/// Packets whose samples are all exactly zero.
LossTrace detect_lost_packets(const Waveform& lossy);

/// Position of each packet in its loss run (1-based), 0 for received packets.
std::vector<int> loss_run_counts(const LossTrace& trace);

/// Per-STFT-frame loss flags; frame t belongs to packet floor(t/2). Frames
/// past the last packet repeat its flag.
std::vector<bool> frame_loss_flags(const LossTrace& trace, int frames);

/// Replaces received packets of `generated` by `original`, crossfading over
/// the first/last samples of each received packet that borders a loss.
Waveform splice(const Waveform& generated, const Waveform& original, const LossTrace& trace, const SpliceConfig& cfg);

/// Output has the input length. With `trace` null, losses are detected as
/// all-zero packets.
Waveform conceal(const Generator& gen, const Waveform& lossy, const LossTrace* trace, const DecayPolicy& decay = {},
                 const SpliceConfig& splice_cfg = {});

/// Single-thread wall-clock time / audio duration, median of `runs` runs on
/// `seconds` of synthetic lossy audio.
double measure_rtf(const Generator& gen, double seconds, int runs = 5);

}  // namespace bsplc
