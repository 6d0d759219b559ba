#include <doctest.h>

#include <numbers>

#include "bsplc/losses.hpp"
#include "bsplc/metrics.hpp"
#include "bsplc/ops.hpp"
#include "bsplc/random.hpp"
#include "test_util.hpp"

using namespace bsplc;
using ad::Var;

namespace {

spectral::ComplexSpectrogram random_spec(int frames, int bins, Rng& rng) {
  spectral::ComplexSpectrogram s;
  s.frames = frames;
  s.bins = bins;
  for (int i = 0; i < frames * bins; ++i) s.data.emplace_back(rng.normal(), rng.normal());
  return s;
}

// Compressed-domain loss built from polar form rather than s*|s|^(p-1).
double plcpa_polar(const spectral::ComplexSpectrogram& e, const spectral::ComplexSpectrogram& r, double p, double wa,
                   double wp) {
  double acc = 0.0;
  for (std::size_t i = 0; i < e.data.size(); ++i) {
    const double me = std::pow(std::abs(e.data[i]), p), mr = std::pow(std::abs(r.data[i]), p);
    const auto ce = std::polar(me, std::arg(e.data[i])), cr = std::polar(mr, std::arg(r.data[i]));
    acc += wa * (mr - me) * (mr - me) + wp * std::norm(cr - ce);
  }
  return acc / e.data.size();
}

Var to_var(const spectral::RealSpectrogram& s) { return Var({1, s.frames, s.bins, 2}, s.data); }

Waveform noise(std::size_t n, std::uint64_t seed, double scale = 0.3) {
  Waveform w;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) w.samples.push_back(scale * rng.normal());
  return w;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("compressed spectral loss agrees with a polar-form loop") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const int T = 1 + trial % 5, F = 1 + trial % 13;
    const auto e = random_spec(T, F, rng), r = random_spec(T, F, rng);
    const double wa = 0.25 + trial % 3, wp = 0.5 + trial % 2;
    CHECK(plcpa_loss(e, r, 0.3, {wa, wp}) == doctest::Approx(plcpa_polar(e, r, 0.3, wa, wp)).epsilon(1e-10));
  }
  spectral::ComplexSpectrogram zero, one;
  zero.frames = one.frames = 1;
  zero.bins = one.bins = 1;
  zero.data = {{0.0, 0.0}};
  one.data = {{1.0, 0.0}};
  CHECK(plcpa_loss(zero, one, 0.3) == doctest::Approx(2.0));
  CHECK(plcpa_loss(one, one, 0.3) == 0.0);
  CHECK_THROWS(plcpa_loss(zero, random_spec(2, 1, rng), 0.3));
}

TEST_CASE("time-domain and pitch losses") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    Waveform a = noise(50 + trial, 100 + trial), b = noise(50 + trial, 300 + trial);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.samples.size(); ++i) acc += std::abs(a.samples[i] - b.samples[i]);
    CHECK(mae_time_loss(a, b) == doctest::Approx(acc / a.samples.size()).epsilon(1e-12));
  }
  Waveform a = noise(100, 3), b = a;
  for (double& v : b.samples) v += 0.1;
  CHECK(mae_time_loss(a, b) == doctest::Approx(0.1));
  CHECK(f0_loss({0.2, 0.4, 0.0}, {0.3, 0.4, 0.6}) == doctest::Approx(0.7 / 3.0));
  CHECK(f0_loss({0.5}, {0.5}) == 0.0);
  CHECK_THROWS(f0_loss({0.5}, {0.5, 0.1}));
  CHECK_THROWS(mae_time_loss(a, noise(99, 4)));
}

TEST_CASE("mel filterbank covers 0-8 kHz with 64 non-empty bands") {
  const auto& fb = mel_filterbank();
  REQUIRE(fb.size() == static_cast<std::size_t>(kMelBands) * spectral::kWideBins);
  for (int m = 0; m < kMelBands; ++m) {
    double peak = 0.0;
    for (int k = 0; k < spectral::kWideBins; ++k) {
      const double w = fb[m * spectral::kWideBins + k];
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
      peak = std::max(peak, w);
    }
    CHECK(peak > 0.0);
  }
}

TEST_CASE("a 6 dB attenuation shifts every log-mel feature by the same offset") {
  const Waveform ref = noise(9600, 5);
  Waveform est = ref;
  const double g = std::pow(10.0, -6.0 / 20.0);
  for (double& v : est.samples) v *= g;
  const double offset = std::abs(std::log(g * g));
  CHECK(linguistic_loss(est, ref) == doctest::Approx(offset).epsilon(1e-6));
  CHECK(linguistic_loss(est, ref) == doctest::Approx(linguistic_loss(ref, est)).epsilon(1e-12));
  CHECK(linguistic_loss(ref, ref) == 0.0);

  // pluggable provider
  const LinguisticProvider first = [](const Waveform& w) { return std::vector<double>{w.samples[0]}; };
  CHECK(linguistic_loss(est, ref, first) == doctest::Approx(std::abs(est.samples[0] - ref.samples[0])));
  const LinguisticProvider broken = [](const Waveform&) -> std::vector<double> { throw std::runtime_error("offline"); };
  CHECK_THROWS_AS(linguistic_loss(est, ref, broken), LossError);
}

TEST_CASE("adversarial objectives") {
  CHECK(lsgan_g_loss({{1.0, 1.0}, {0.0}}) == doctest::Approx(0.5));
  CHECK(lsgan_d_loss({{1.0}, {0.0, 1.0}}, {{0.0}, {1.0, 1.0}}) == doctest::Approx((0.0 + 0.0 + 0.5 + 1.0) / 2.0));
  CHECK(metricgan_g_loss(0.25) == doctest::Approx(0.5625));
  CHECK(metricgan_d_loss(0.5, 0.25, 0.75) == doctest::Approx(0.25 + 0.25));
  CHECK_THROWS(lsgan_g_loss({}));
  CHECK_THROWS(lsgan_d_loss({{1.0}}, {}));

  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<double>> real(1 + trial % 3), fake(real.size());
    double want = 0.0;
    for (std::size_t m = 0; m < real.size(); ++m) {
      double r = 0.0, f = 0.0;
      for (int i = 0; i < 4 + trial % 5; ++i) {
        real[m].push_back(rng.normal());
        fake[m].push_back(rng.normal());
        r += (real[m].back() - 1.0) * (real[m].back() - 1.0);
        f += fake[m].back() * fake[m].back();
      }
      want += (r + f) / real[m].size();
    }
    CHECK(lsgan_d_loss(real, fake) == doctest::Approx(want / real.size()).epsilon(1e-12));
  }
}

TEST_CASE("combine applies the weights and names non-finite terms") {
  LossReport t;
  t.plcpa = t.mae = t.f0 = t.linguistic = 1.0;
  CHECK(combine(t, LossWeights{}).total == doctest::Approx(2.101));
  t.gan_g = 0.5;
  t.metric_g = 0.25;
  LossWeights w;
  w.adv_weight = 2.0;
  CHECK(combine(t, w).total == doctest::Approx(2.101 + 1.5));
  t.f0 = std::nan("");
  try {
    (void)combine(t, w);
    FAIL("non-finite term accepted");
  } catch (const LossError& e) {
    CHECK(std::string(e.what()).find("'f0'") != std::string::npos);
  }
  w.alpha = -1.0;
  CHECK_THROWS(w.validate());
}

TEST_CASE("differentiable losses reproduce the plain definitions") {
  Rng rng(7);
  const spectral::StftConfig cfg;
  for (int trial = 0; trial < 10; ++trial) {
    const auto e = random_spec(3, spectral::kBins, rng), r = random_spec(3, spectral::kBins, rng);
    const double want = plcpa_loss(e, r, cfg.compression);
    const Var got = losses::plcpa(to_var(spectral::compress(e, cfg.compression)), to_var(spectral::compress(r, cfg.compression)));
    CHECK(got.item() == doctest::Approx(want).epsilon(1e-9));
  }
  const Waveform a = noise(4800, 8), b = noise(4800, 9);
  const Var va({1, 4800}, a.samples), vb({1, 4800}, b.samples);
  CHECK(losses::mae(va, vb).item() == doctest::Approx(mae_time_loss(a, b)).epsilon(1e-12));
  CHECK(testutil::max_abs_diff(losses::log_mel(va).value(), log_mel_features(a)) < 1e-8);
  CHECK(losses::linguistic(va, vb).item() == doctest::Approx(linguistic_loss(a, b)).epsilon(1e-9));

  const std::vector<std::vector<double>> real{{0.3, 0.9}, {1.2}}, fake{{0.1, -0.4}, {0.7}};
  std::vector<Var> vr, vf;
  for (const auto& m : real) vr.emplace_back(ad::Shape{static_cast<int>(m.size())}, m);
  for (const auto& m : fake) vf.emplace_back(ad::Shape{static_cast<int>(m.size())}, m);
  CHECK(losses::lsgan_g(vf).item() == doctest::Approx(lsgan_g_loss(fake)).epsilon(1e-12));
  CHECK(losses::lsgan_d(vr, vf).item() == doctest::Approx(lsgan_d_loss(real, fake)).epsilon(1e-12));
  const Var s({2}, {0.2, 0.6}), c({2}, {0.9, 0.4});
  CHECK(losses::metricgan_g(s).item() == doctest::Approx((metricgan_g_loss(0.2) + metricgan_g_loss(0.6)) / 2));
  CHECK(losses::metricgan_d(c, s, {0.5, 0.1}).item() ==
        doctest::Approx((metricgan_d_loss(0.9, 0.2, 0.5) + metricgan_d_loss(0.4, 0.6, 0.1)) / 2));
}

TEST_CASE("frame weights restrict the spectral loss to the selected frames") {
  Rng rng(10);
  const spectral::StftConfig cfg;
  const auto e = random_spec(4, spectral::kBins, rng), r = random_spec(4, spectral::kBins, rng);
  const Var ve = to_var(spectral::compress(e, cfg.compression)), vr = to_var(spectral::compress(r, cfg.compression));
  spectral::ComplexSpectrogram e1 = e, r1 = r;
  e1.frames = r1.frames = 1;
  e1.data.assign(e.data.begin() + 2 * spectral::kBins, e.data.begin() + 3 * spectral::kBins);
  r1.data.assign(r.data.begin() + 2 * spectral::kBins, r.data.begin() + 3 * spectral::kBins);
  CHECK(losses::plcpa(ve, vr, {}, {0, 0, 1, 0}).item() == doctest::Approx(plcpa_loss(e1, r1, cfg.compression)).epsilon(1e-9));
}

TEST_CASE("quality metrics on hand examples") {
  const std::vector<double> r{1.0, 0.0}, e{1.0, 1.0};
  CHECK(metrics::si_sdr(e, r) == doctest::Approx(0.0));
  CHECK(std::isinf(metrics::si_sdr(r, r)));
  CHECK(metrics::si_sdr_capped(r, r) == metrics::kSdrCapDb);
  const std::vector<double> r3{1.0, 2.0, 3.0}, e3{1.0, 2.0, 4.0};
  // alpha = (e.r)/(r.r) = 17/14
  const double alpha = 17.0 / 14.0;
  double tgt = 0.0, res = 0.0;
  for (int i = 0; i < 3; ++i) {
    tgt += alpha * r3[i] * alpha * r3[i];
    res += (e3[i] - alpha * r3[i]) * (e3[i] - alpha * r3[i]);
  }
  CHECK(metrics::si_sdr(e3, r3) == doctest::Approx(10.0 * std::log10(tgt / res)));
  CHECK_THROWS(metrics::si_sdr(e, std::vector<double>{0.0, 0.0}));

  spectral::ComplexSpectrogram a, b;
  a.frames = b.frames = 2;
  a.bins = b.bins = 4;
  a.data.assign(8, {1.0, 0.0});
  b.data.assign(8, {std::sqrt(10.0), 0.0});
  CHECK(metrics::log_spectral_distance(b, a, 0, 4) == doctest::Approx(10.0));
  CHECK(metrics::log_spectral_distance(a, a, 0, 4) == 0.0);
  CHECK_THROWS(metrics::log_spectral_distance(a, a, 2, 2));
}

}
