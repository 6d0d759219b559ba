#include "bsplc/loss_channel.hpp"

#include <fstream>
#include <string>

#include "bsplc/random.hpp"

namespace bsplc {

namespace {
bool is_prob(double p) { return p >= 0.0 && p <= 1.0; }
}  // namespace

void GEParams::validate() const {
  if (!is_prob(p_gb) || !is_prob(p_bg) || !is_prob(loss_good) || !is_prob(loss_bad))
    throw ChannelError("Gilbert-Elliott probabilities must lie in [0, 1]");
  if (p_gb + p_bg <= 0.0) throw ChannelError("Gilbert-Elliott chain needs p_gb + p_bg > 0");
}

double LossTrace::loss_rate() const {
  if (lost.empty()) return 0.0;
  std::size_t n = 0;
  for (bool b : lost) n += b;
  return static_cast<double>(n) / static_cast<double>(lost.size());
}

double expected_loss_rate(const GEParams& params) {
  params.validate();
  const double pi_bad = params.p_gb / (params.p_gb + params.p_bg);
  return (1.0 - pi_bad) * params.loss_good + pi_bad * params.loss_bad;
}

LossTrace sample_trace(const GEParams& params, std::size_t num_packets, double max_rate) {
  if (num_packets == 0) throw ChannelError("sample_trace: need at least one packet");
  const double expected = expected_loss_rate(params);
  if (expected > max_rate)
    throw ChannelError("expected loss rate " + std::to_string(expected) + " exceeds cap " + std::to_string(max_rate));
  constexpr int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng(params.seed + static_cast<std::uint64_t>(attempt));
    LossTrace trace;
    trace.lost.resize(num_packets);
    bool bad = false;
    for (std::size_t i = 0; i < num_packets; ++i) {
      trace.lost[i] = rng.uniform() < (bad ? params.loss_bad : params.loss_good);
      bad = bad ? !(rng.uniform() < params.p_bg) : rng.uniform() < params.p_gb;
    }
    if (trace.loss_rate() <= max_rate) return trace;
  }
  throw ChannelError("sample_trace: realised loss rate exceeded cap in 100 attempts");
}

std::size_t packets_for(std::size_t num_samples) { return (num_samples + kPacketSamples - 1) / kPacketSamples; }

Waveform apply_trace(const Waveform& wave, const LossTrace& trace) {
  const std::size_t need = packets_for(wave.samples.size());
  if (trace.size() < need)
    throw ChannelError("trace has " + std::to_string(trace.size()) + " packets, audio needs " + std::to_string(need));
  Waveform out = wave;
  for (std::size_t p = 0; p < need; ++p) {
    if (!trace.lost[p]) continue;
    const std::size_t end = std::min(out.samples.size(), (p + 1) * kPacketSamples);
    for (std::size_t i = p * kPacketSamples; i < end; ++i) out.samples[i] = 0.0;
  }
  return out;
}

std::map<std::size_t, std::size_t> burst_histogram(const LossTrace& trace) {
  std::map<std::size_t, std::size_t> hist;
  std::size_t run = 0;
  for (bool b : trace.lost) {
    if (b) {
      ++run;
    } else if (run) {
      ++hist[run];
      run = 0;
    }
  }
  if (run) ++hist[run];
  return hist;
}

LossTrace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ChannelError("cannot open trace " + path.string());
  LossTrace trace;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.size() != 1 || (line[0] != '0' && line[0] != '1'))
      throw ChannelError(path.string() + ":" + std::to_string(lineno) + ": expected '0' or '1'");
    trace.lost.push_back(line[0] == '1');
  }
  if (trace.lost.empty()) throw ChannelError("empty trace file " + path.string());
  return trace;
}

void write_trace(const std::filesystem::path& path, const LossTrace& trace) {
  if (trace.lost.empty()) throw ChannelError("refusing to write an empty trace");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ChannelError("cannot write trace " + path.string());
  for (bool b : trace.lost) os << (b ? '1' : '0') << '\n';
  if (!os) throw ChannelError("write failed: " + path.string());
}

}  // namespace bsplc
