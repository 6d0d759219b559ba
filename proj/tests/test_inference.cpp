#include <doctest.h>

#include "bsplc/inference.hpp"
#include "bsplc/synthetic.hpp"
#include "test_util.hpp"

using namespace bsplc;

namespace {

LossTrace trace_of(const std::string& s) {
  LossTrace t;
  for (char c : s) t.lost.push_back(c == '1');
  return t;
}

Waveform constant(std::size_t n, double v) {
  Waveform w;
  w.samples.assign(n, v);
  return w;
}

const Generator& toy_generator() {
  static const Generator g(GeneratorConfig::toy(), 42);
  return g;
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("gain schedule") {
  const DecayPolicy p;
  for (int c = 0; c <= 7; ++c) CHECK(gain_for_frame(c, p) == 1.0);
  CHECK(gain_for_frame(8, p) == doctest::Approx(0.7079).epsilon(1e-4));
  CHECK(gain_for_frame(9, p) == doctest::Approx(0.5012).epsilon(1e-4));
  CHECK(gain_for_frame(10, p) == doctest::Approx(0.3548).epsilon(1e-4));
  CHECK(gain_for_frame(100, p) == doctest::Approx(0.0316).epsilon(1e-3));
  CHECK(gain_for_frame(17, p) == doctest::Approx(std::pow(10.0, -1.5)));
  for (int c = 1; c < 40; ++c) CHECK(gain_for_frame(c + 1, p) <= gain_for_frame(c, p));
  DecayPolicy bad;
  bad.decay_db_per_packet = 0.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("packet bookkeeping") {
  CHECK(loss_run_counts(trace_of("0110111")) == std::vector<int>{0, 1, 2, 0, 1, 2, 3});
  CHECK(frame_loss_flags(trace_of("01"), 5) == std::vector<bool>{false, false, true, true, true});
  CHECK(frame_loss_flags(LossTrace{}, 2) == std::vector<bool>{false, false});

  Waveform w = constant(3 * kPacketSamples + 10, 0.0);
  w.samples[kPacketSamples + 500] = 1e-9;
  CHECK(detect_lost_packets(w).lost == std::vector<bool>{true, false, true, true});
}

TEST_CASE("splice keeps received audio and crossfades on the received side") {
  const std::size_t n = 3 * kPacketSamples;
  const Waveform gen = constant(n, 1.0), orig = constant(n, 2.0);
  SpliceConfig cfg;
  const int fade = cfg.crossfade_samples();
  CHECK(fade == 240);
  const auto out = splice(gen, orig, trace_of("010"), cfg);
  for (std::size_t i = 0; i < n; ++i) {
    double want;
    if (i < kPacketSamples - fade) {
      want = 2.0;
    } else if (i < kPacketSamples) {
      const int k = kPacketSamples - 1 - static_cast<int>(i);
      want = 1.0 + (k + 0.5) / fade;
    } else if (i < 2u * kPacketSamples) {
      want = 1.0;
    } else if (i < 2u * kPacketSamples + fade) {
      want = 1.0 + (static_cast<double>(i - 2 * kPacketSamples) + 0.5) / fade;
    } else {
      want = 2.0;
    }
    CHECK(out.samples[i] == doctest::Approx(want).epsilon(1e-12));
  }
  SpliceConfig hard;
  hard.crossfade_ms = 0.0;
  const auto h = splice(gen, orig, trace_of("010"), hard);
  CHECK(h.samples[kPacketSamples - 1] == 2.0);
  CHECK(h.samples[kPacketSamples] == 1.0);
  CHECK_THROWS(splice(gen, orig, trace_of("01"), cfg));
}

TEST_CASE("no loss means the input comes back unchanged") {
  const Waveform clean = synthetic_speech(0.5, 3);
  const auto out = conceal(toy_generator(), clean, nullptr);
  CHECK(out.samples == clean.samples);
  const LossTrace none = trace_of(std::string(packets_for(clean.samples.size()), '0'));
  CHECK(conceal(toy_generator(), clean, &none).samples == clean.samples);
}

TEST_CASE("length is preserved and lost packets are filled") {
  Waveform clean = synthetic_speech(0.37, 4);
  const auto tr = trace_of("0001100011000000000");
  const auto lossy = apply_trace(clean, tr);
  const auto out = conceal(toy_generator(), lossy, &tr);
  CHECK(out.samples.size() == lossy.samples.size());
  double filled = 0.0;
  for (std::size_t i = 3 * kPacketSamples; i < 5 * kPacketSamples; ++i) filled += out.samples[i] * out.samples[i];
  CHECK(filled > 0.0);
  for (double v : out.samples) CHECK(std::isfinite(v));
  // deterministic
  CHECK(conceal(toy_generator(), lossy, &tr).samples == out.samples);
  // unspliced output differs from the received audio
  SpliceConfig off;
  off.enabled = false;
  CHECK(conceal(toy_generator(), lossy, &tr, {}, off).samples != out.samples);
  CHECK_THROWS(conceal(toy_generator(), lossy, nullptr, {}, SpliceConfig{true, 20.0}));
  const auto short_tr = trace_of("000");
  CHECK_THROWS(conceal(toy_generator(), lossy, &short_tr));
}

TEST_CASE("long losses fade out along the gain schedule") {
  const std::size_t packets = 24;
  const Waveform silent = constant(packets * kPacketSamples, 0.0);
  const LossTrace all = trace_of(std::string(packets, '1'));
  DecayPolicy never;
  never.threshold_packets = 1000;
  const DecayPolicy policy;
  const auto flat = conceal(toy_generator(), silent, &all, never);
  const auto faded = conceal(toy_generator(), silent, &all, policy);
  // the first half of packet p is synthesised from frames 2p and 2p+1 only
  for (std::size_t p = 0; p < packets; ++p) {
    const double g = gain_for_frame(static_cast<int>(p) + 1, policy);
    double worst = 0.0, scale = 0.0;
    for (std::size_t i = p * kPacketSamples; i < p * kPacketSamples + kPacketSamples / 2; ++i) {
      worst = std::max(worst, std::abs(faded.samples[i] - g * flat.samples[i]));
      scale = std::max(scale, std::abs(flat.samples[i]));
    }
    CHECK(worst <= 1e-9 * std::max(scale, 1e-12));
  }
}

TEST_CASE("real-time factor is positive and grows with model size") {
  const double toy = measure_rtf(toy_generator(), 1.0, 1);
  const Generator base(GeneratorConfig::base(), 1);
  const double big = measure_rtf(base, 1.0, 1);
  CHECK(toy > 0.0);
  CHECK(toy < big);
  MESSAGE("rtf toy " << toy << ", base " << big);
  CHECK_THROWS(measure_rtf(toy_generator(), 0.0, 1));
}

}
