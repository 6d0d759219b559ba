#include <doctest.h>

#include <cstring>
#include <numbers>

#include "bsplc/spectral.hpp"
#include "bsplc/synthetic.hpp"
#include "test_util.hpp"

using namespace bsplc;
using namespace bsplc::spectral;

namespace {

const StftConfig kCfg;

// Direct O(N^2) DFT of frame t of x, with the causal framing written out.
std::vector<std::complex<double>> naive_frame(const std::vector<double>& x, int t) {
  const int N = kFftSize;
  const auto w = sqrt_hann(N);
  std::vector<std::complex<double>> out(kBins);
  for (int k = 0; k < kBins; ++k) {
    std::complex<double> acc = 0.0;
    for (int n = 0; n < N; ++n) {
      const long s = static_cast<long>(t - 1) * kHop + n;
      const double v = (s >= 0 && s < static_cast<long>(x.size())) ? x[s] : 0.0;
      acc += v * w[n] * std::polar(1.0, -2.0 * std::numbers::pi * k * n / N);
    }
    out[k] = acc;
  }
  return out;
}

double interior_rel_error(const std::vector<double>& x, const std::vector<double>& y) {
  // skip one window at each edge
  double num = 0.0, den = 0.0;
  for (std::size_t i = kFftSize; i + kFftSize < x.size(); ++i) {
    num += (x[i] - y[i]) * (x[i] - y[i]);
    den += x[i] * x[i];
  }
  return std::sqrt(num / den);
}

RealSpectrogram random_real_spec(int frames, std::uint64_t seed) {
  RealSpectrogram s;
  s.frames = frames;
  s.bins = kBins;
  s.data = testutil::random_vec(static_cast<std::size_t>(frames) * kBins * 2, seed);
  return s;
}

}  // namespace

TEST_SUITE("spectral") {

TEST_CASE("configuration invariants") {
  CHECK_NOTHROW(kCfg.validate());
  StftConfig bad = kCfg;
  bad.hop = 400;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = kCfg;
  bad.compression = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = kCfg;
  bad.win_length = 480;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK(num_frames(48000, kCfg) == 100);
  CHECK(num_frames(48001, kCfg) == 101);
  CHECK_THROWS(stft(std::span<const double>(), kCfg));
}

TEST_CASE("stft matches a naive DFT") {
  const auto x = testutil::random_vec(4000, 1);
  const auto s = stft(std::span<const double>(x), kCfg);
  CHECK(s.frames == 9);
  CHECK(s.bins == kBins);
  for (int t : {0, 1, 4, 8}) {
    const auto want = naive_frame(x, t);
    double worst = 0.0;
    for (int k = 0; k < kBins; ++k) worst = std::max(worst, std::abs(want[k] - s.at(t, k)));
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("zeros, tones and impulses") {
  std::vector<double> z(4800, 0.0);
  const auto sz = stft(std::span<const double>(z), kCfg);
  CHECK(std::all_of(sz.data.begin(), sz.data.end(), [](auto c) { return c == std::complex<double>(0.0); }));

  std::vector<double> sine(48000);
  for (int i = 0; i < 48000; ++i) sine[i] = std::sin(2.0 * std::numbers::pi * 1000.0 * i / kSampleRate);
  const auto ss = stft(std::span<const double>(sine), kCfg);
  for (int t = 2; t < ss.frames - 2; ++t) {
    int best = 0;
    for (int k = 1; k < kBins; ++k)
      if (std::abs(ss.at(t, k)) > std::abs(ss.at(t, best))) best = k;
    CHECK(best == 20);
  }

  std::vector<double> imp(4800, 0.0);
  imp[0] = 1.0;
  const auto si = stft(std::span<const double>(imp), kCfg);
  for (int t = 0; t < si.frames; ++t) {
    double e = 0.0;
    for (int k = 0; k < kBins; ++k) e += std::norm(si.at(t, k));
    // frames 0 and 1 overlap sample 0, but the periodic window is zero at the
    // start of frame 1, so only frame 0 carries energy
    if (t == 0)
      CHECK(e > 0.0);
    else
      CHECK(e == 0.0);
  }
}

TEST_CASE("Parseval holds per frame") {
  const auto x = testutil::random_vec(9600, 2);
  const auto s = stft(std::span<const double>(x), kCfg);
  const auto w = sqrt_hann(kFftSize);
  for (int t = 0; t < s.frames; ++t) {
    double time = 0.0;
    for (int n = 0; n < kFftSize; ++n) {
      const long i = static_cast<long>(t - 1) * kHop + n;
      const double v = (i >= 0 && i < static_cast<long>(x.size())) ? x[i] * w[n] : 0.0;
      time += v * v;
    }
    double freq = std::norm(s.at(t, 0)) + std::norm(s.at(t, kBins - 1));
    for (int k = 1; k < kBins - 1; ++k) freq += 2.0 * std::norm(s.at(t, k));
    CHECK(freq / kFftSize == doctest::Approx(time).epsilon(1e-4));
  }
}

TEST_CASE("perfect reconstruction on noise and speech-like material") {
  const auto x = testutil::random_vec(48000, 3);
  const auto y = istft(stft(std::span<const double>(x), kCfg), kCfg, x.size());
  REQUIRE(y.samples.size() == x.size());
  CHECK(interior_rel_error(x, y.samples) <= 1e-6);

  const Waveform sp = synthetic_speech(1.0, 4);
  const auto r = istft(stft(sp, kCfg), kCfg, sp.samples.size());
  const double err = interior_rel_error(sp.samples, r.samples);
  CHECK(-20.0 * std::log10(err) >= 100.0);

  ComplexSpectrogram zero;
  zero.frames = 5;
  zero.bins = kBins;
  zero.data.assign(5 * kBins, 0.0);
  const auto zw = istft(zero, kCfg);
  CHECK(zw.samples.size() == 5u * kHop);
  CHECK(std::all_of(zw.samples.begin(), zw.samples.end(), [](double v) { return v == 0.0; }));

  ComplexSpectrogram wrong = zero;
  wrong.bins = 100;
  wrong.data.assign(5 * 100, 0.0);
  CHECK_THROWS(istft(wrong, kCfg));
}

TEST_CASE("compression examples and inverse") {
  ComplexSpectrogram s;
  s.frames = 1;
  s.bins = 3;
  s.data = {{1.0, 0.0}, {4.0, 0.0}, {0.0, 0.0}};
  const auto c3 = compress(s, 0.3);
  CHECK(c3.at(0, 0, 0) == doctest::Approx(1.0));
  CHECK(c3.at(0, 0, 1) == 0.0);
  CHECK(c3.at(0, 2, 0) == 0.0);
  CHECK(c3.at(0, 2, 1) == 0.0);
  const auto c5 = compress(s, 0.5);
  CHECK(c5.at(0, 1, 0) == doctest::Approx(2.0));
  const auto d = decompress(c3, 0.3);
  CHECK(d.data[0] == std::complex<double>(1.0, 0.0));
  CHECK(d.data[2] == std::complex<double>(0.0, 0.0));

  ComplexSpectrogram r;
  r.frames = 4;
  r.bins = kBins;
  const auto re = testutil::random_vec(4 * kBins, 5, -3, 3), im = testutil::random_vec(4 * kBins, 6, -3, 3);
  for (int i = 0; i < 4 * kBins; ++i) r.data.emplace_back(re[i], im[i]);
  const auto rt = decompress(compress(r, 0.3), 0.3);
  for (std::size_t i = 0; i < r.data.size(); ++i) {
    CHECK(std::abs(rt.data[i] - r.data[i]) <= 1e-6 * std::abs(r.data[i]));
  }
  // phase preserved and magnitude monotone
  const auto c = compress(r, 0.3);
  for (int i = 0; i < 4 * kBins; ++i) {
    const std::complex<double> ci(c.data[2 * i], c.data[2 * i + 1]);
    CHECK(std::arg(ci) == doctest::Approx(std::arg(r.data[i])).epsilon(1e-9));
    CHECK(std::abs(ci) == doctest::Approx(std::pow(std::abs(r.data[i]), 0.3)).epsilon(1e-12));
  }
}

TEST_CASE("band split and merge are exact inverses") {
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_real_spec(1 + trial % 7, 100 + trial);
    const auto pair = band_split(s);
    CHECK(pair.wide.size() == static_cast<std::size_t>(s.frames) * kWideBins * 2);
    CHECK(pair.high.size() == static_cast<std::size_t>(s.frames) * kHighBins * 2);
    const auto m = band_merge(pair);
    CHECK(m.frames == s.frames);
    CHECK(std::memcmp(m.data.data(), s.data.data(), s.data.size() * sizeof(double)) == 0);
    const auto again = band_split(m);
    CHECK(again.wide == pair.wide);
    CHECK(again.high == pair.high);
  }
  RealSpectrogram bad;
  bad.frames = 1;
  bad.bins = 480;
  bad.data.assign(960, 0.0);
  CHECK_THROWS(band_split(bad));
}

TEST_CASE("bins 160 and 161 fall on either side of the band boundary") {
  RealSpectrogram s;
  s.frames = 2;
  s.bins = kBins;
  s.data.assign(2 * kBins * 2, 0.0);
  s.at(1, 160, 0) = 1.0;
  auto p = band_split(s);
  CHECK(p.wide[(1 * kWideBins + 160) * 2] == 1.0);
  CHECK(std::all_of(p.high.begin(), p.high.end(), [](double v) { return v == 0.0; }));

  s.at(1, 160, 0) = 0.0;
  s.at(1, 161, 1) = 1.0;
  p = band_split(s);
  CHECK(p.high[(1 * kHighBins + 0) * 2 + 1] == 1.0);
  CHECK(std::all_of(p.wide.begin(), p.wide.end(), [](double v) { return v == 0.0; }));
}

}
