#include <doctest.h>

#include <fstream>
#include <numbers>

#include "bsplc/f0.hpp"
#include "bsplc/random.hpp"
#include "test_util.hpp"

using namespace bsplc;

namespace {

Waveform tone(double hz, double seconds, double second_harmonic = 0.0) {
  Waveform w;
  const int n = static_cast<int>(seconds * kSampleRate);
  for (int i = 0; i < n; ++i) {
    const double ph = 2.0 * std::numbers::pi * hz * i / kSampleRate;
    w.samples.push_back(0.5 * std::sin(ph) + second_harmonic * std::sin(2.0 * ph));
  }
  return w;
}

// frames whose analysis window lies fully inside the signal
std::vector<double> interior(const F0Track& t) { return {t.values.begin() + 3, t.values.end() - 3}; }

}  // namespace

TEST_SUITE("f0") {

TEST_CASE("pure tone is tracked within 2 Hz") {
  const auto track = extract_f0(tone(200.0, 1.0));
  CHECK(track.values.size() == 100);
  for (double v : interior(track)) CHECK(std::abs(v - 200.0) <= 2.0);
  for (double hz : {80.0, 123.0, 310.0, 450.0}) {
    for (double v : interior(extract_f0(tone(hz, 0.5)))) CHECK(std::abs(v - hz) <= 0.01 * hz + 1.0);
  }
}

TEST_CASE("noise is mostly unvoiced and silence entirely") {
  Waveform n;
  Rng rng(9);
  for (int i = 0; i < 2 * kSampleRate; ++i) n.samples.push_back(0.3 * rng.normal());
  const auto t = extract_f0(n);
  std::size_t unvoiced = 0;
  for (double v : t.values) unvoiced += v == 0.0;
  CHECK(static_cast<double>(unvoiced) / t.values.size() >= 0.95);

  Waveform s;
  s.samples.assign(kSampleRate, 0.0);
  const auto st = extract_f0(s);
  CHECK(std::all_of(st.values.begin(), st.values.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("normalisation divides by the ceiling") {
  F0Track t;
  t.values = {500.0, 250.0, 0.0};
  const auto n = normalize_f0(t);
  CHECK(n == std::vector<double>{1.0, 0.5, 0.0});
}

TEST_CASE("a strong second harmonic does not cause an octave error") {
  const auto track = extract_f0(tone(150.0, 1.0, 0.8));
  for (double v : interior(track)) CHECK(std::abs(v - 150.0) <= 15.0);
}

TEST_CASE("delaying the input by one hop delays the track by one frame") {
  const Waveform w = tone(220.0, 0.5);
  Waveform d;
  d.samples.assign(480, 0.0);
  d.samples.insert(d.samples.end(), w.samples.begin(), w.samples.end());
  const auto a = extract_f0(w), b = extract_f0(d);
  REQUIRE(b.values.size() == a.values.size() + 1);
  CHECK(b.values[0] == 0.0);
  for (std::size_t t = 0; t < a.values.size(); ++t) CHECK(b.values[t + 1] == a.values[t]);
}

TEST_CASE("cache files round trip through float32") {
  const auto dir = testutil::scratch_dir("f0cache");
  CHECK(f0_cache_path("/a/b/clip.wav") == std::filesystem::path("/a/b/clip.f0"));
  F0Track t;
  t.values = {0.0, 101.5, 333.25, 0.0};
  write_f0_cache(dir / "x.f0", t);
  CHECK(read_f0_cache(dir / "x.f0").values == t.values);

  const Waveform w = tone(180.0, 0.3);
  write_wav(dir / "c.wav", w);
  const auto first = cached_f0(dir / "c.wav", w);
  CHECK(std::filesystem::exists(dir / "c.f0"));
  const auto second = cached_f0(dir / "c.wav", w);
  REQUIRE(first.values.size() == second.values.size());
  for (std::size_t i = 0; i < first.values.size(); ++i)
    CHECK(second.values[i] == static_cast<double>(static_cast<float>(first.values[i])));

  std::ofstream(dir / "odd.f0") << "abc";
  CHECK_THROWS_AS(read_f0_cache(dir / "odd.f0"), AudioError);
}

}
