#pragma once

// Gilbert-Elliott packet-loss channel.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <vector>

#include "bsplc/audio_io.hpp"

namespace bsplc {

inline constexpr int kPacketSamples = 960;  // 20 ms at 48 kHz

/// Two-state Markov channel. Each packet is lost with probability loss_good
/// or loss_bad depending on the state it is emitted in.
struct GEParams {
  double p_gb = 0.0;  // Good -> Bad per packet
  double p_bg = 1.0;  // Bad -> Good per packet
  double loss_good = 0.0;
  double loss_bad = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossTrace {
  std::vector<bool> lost;  // one flag per packet, true = lost
  int packet_samples = kPacketSamples;

  std::size_t size() const { return lost.size(); }
  double loss_rate() const;
};

class ChannelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stationary loss probability pi_G*loss_good + pi_B*loss_bad.
double expected_loss_rate(const GEParams& params);

/// Samples a trace starting in the Good state. A draw whose realised loss rate
/// exceeds max_rate is redrawn with seed+1, seed+2, ... up to 100 attempts.
LossTrace sample_trace(const GEParams& params, std::size_t num_packets, double max_rate = 0.5);

/// Zeroes every sample of each lost packet.
Waveform apply_trace(const Waveform& wave, const LossTrace& trace);

/// Number of packets covering `num_samples`.
std::size_t packets_for(std::size_t num_samples);

/// Maximal runs of consecutive losses: run length -> count.
std::map<std::size_t, std::size_t> burst_histogram(const LossTrace& trace);

/// ASCII trace file: one '0'/'1' per line, LF endings, no header.
LossTrace read_trace(const std::filesystem::path& path);
void write_trace(const std::filesystem::path& path, const LossTrace& trace);

}  // namespace bsplc
