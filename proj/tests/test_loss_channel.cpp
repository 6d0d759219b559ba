#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <fstream>

#include "bsplc/loss_channel.hpp"
#include "test_util.hpp"

using namespace bsplc;

namespace {

GEParams burst_channel(double p_gb, double p_bg, std::uint64_t seed) {
  GEParams p;
  p.p_gb = p_gb;
  p.p_bg = p_bg;
  p.loss_good = 0.0;
  p.loss_bad = 1.0;
  p.seed = seed;
  return p;
}

LossTrace from_string(const std::string& s) {
  LossTrace t;
  for (char c : s) t.lost.push_back(c == '1');
  return t;
}

}  // namespace

TEST_SUITE("loss_channel") {

TEST_CASE("stationary loss rate") {
  CHECK(expected_loss_rate(burst_channel(0.05, 0.2, 0)) == doctest::Approx(0.2));
  CHECK(expected_loss_rate(burst_channel(0.0, 0.5, 0)) == 0.0);
  CHECK(expected_loss_rate(burst_channel(0.1, 0.5, 0)) == doctest::Approx(1.0 / 6.0));
  GEParams mixed = burst_channel(0.1, 0.4, 0);
  mixed.loss_good = 0.1;
  mixed.loss_bad = 0.5;
  CHECK(expected_loss_rate(mixed) == doctest::Approx(0.8 * 0.1 + 0.2 * 0.5));
  CHECK_THROWS_AS(expected_loss_rate(burst_channel(1.5, 0.2, 0)), ChannelError);
  CHECK_THROWS_AS(expected_loss_rate(burst_channel(0.0, 0.0, 0)), ChannelError);
}

TEST_CASE("a million packets realise the stationary rate") {
  const auto p = burst_channel(0.05, 0.2, 11);
  const auto t = sample_trace(p, 1'000'000);
  CHECK(std::abs(t.loss_rate() - 0.2) <= 0.005);
}

TEST_CASE("burst lengths are geometric with mean 1/p_bg") {
  const auto p = burst_channel(0.1, 0.5, 12);
  const auto hist = burst_histogram(sample_trace(p, 1'000'000));
  double n = 0.0, total = 0.0;
  for (auto [len, count] : hist) {
    n += count;
    total += static_cast<double>(len) * count;
  }
  CHECK(total / n == doctest::Approx(2.0).epsilon(0.02));

  // chi-squared goodness of fit: lengths 1..8 and a tail bin
  constexpr int kBinsUsed = 9;
  std::vector<double> observed(kBinsUsed, 0.0), expected(kBinsUsed, 0.0);
  for (auto [len, count] : hist) observed[std::min<std::size_t>(len, kBinsUsed) - 1] += count;
  double tail = 1.0;
  for (int k = 1; k < kBinsUsed; ++k) {
    const double pk = 0.5 * std::pow(0.5, k - 1);
    expected[k - 1] = n * pk;
    tail -= pk;
  }
  expected[kBinsUsed - 1] = n * tail;
  double stat = 0.0;
  for (int k = 0; k < kBinsUsed; ++k) stat += (observed[k] - expected[k]) * (observed[k] - expected[k]) / expected[k];
  const boost::math::chi_squared dist(kBinsUsed - 1);
  const double pvalue = boost::math::cdf(boost::math::complement(dist, stat));
  CHECK(pvalue > 0.01);
}

TEST_CASE("traces are deterministic in the seed") {
  const auto a = sample_trace(burst_channel(0.1, 0.3, 5), 5000);
  const auto b = sample_trace(burst_channel(0.1, 0.3, 5), 5000);
  const auto c = sample_trace(burst_channel(0.1, 0.3, 6), 5000);
  CHECK(a.lost == b.lost);
  CHECK(a.lost != c.lost);
  const auto none = sample_trace(burst_channel(0.0, 0.5, 7), 1000);
  CHECK(none.loss_rate() == 0.0);
}

TEST_CASE("configurations above the loss cap are rejected") {
  // stationary rate 0.6
  CHECK_THROWS_AS(sample_trace(burst_channel(0.3, 0.2, 1), 100), ChannelError);
  CHECK_NOTHROW(sample_trace(burst_channel(0.3, 0.2, 1), 100, 0.7));
  CHECK_THROWS_AS(sample_trace(burst_channel(0.1, 0.2, 1), 0), ChannelError);
  // realised rates never exceed the cap even when the expectation is close to it
  for (std::uint64_t s = 0; s < 50; ++s) CHECK(sample_trace(burst_channel(0.2, 0.2, s), 20).loss_rate() <= 0.5);
}

TEST_CASE("apply_trace zeroes whole packets") {
  Waveform w;
  w.samples = testutil::random_vec(3 * kPacketSamples + 100, 3, 0.1, 1.0);
  const auto t = from_string("0101");
  const auto out = apply_trace(w, t);
  REQUIRE(out.samples.size() == w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    const bool lost = t.lost[i / kPacketSamples];
    CHECK(out.samples[i] == (lost ? 0.0 : w.samples[i]));
  }
  CHECK(apply_trace(out, t).samples == out.samples);
  CHECK(apply_trace(w, from_string("0000")).samples == w.samples);
  CHECK_THROWS_AS(apply_trace(w, from_string("010")), ChannelError);
  CHECK(packets_for(0) == 0);
  CHECK(packets_for(960) == 1);
  CHECK(packets_for(961) == 2);
}

TEST_CASE("burst histogram counts maximal runs") {
  const auto h = burst_histogram(from_string("011011"));
  CHECK(h == std::map<std::size_t, std::size_t>{{2, 2}});
  CHECK(burst_histogram(from_string("0000")).empty());
  CHECK(burst_histogram(from_string("1101110")) == std::map<std::size_t, std::size_t>{{2, 1}, {3, 1}});
}

TEST_CASE("trace files round trip and malformed files are reported") {
  const auto dir = testutil::scratch_dir("traces");
  const auto t = from_string("0011010001");
  write_trace(dir / "t.txt", t);
  CHECK(read_trace(dir / "t.txt").lost == t.lost);
  {
    std::ifstream in(dir / "t.txt", std::ios::binary);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(text == "0\n0\n1\n1\n0\n1\n0\n0\n0\n1\n");
  }
  std::ofstream(dir / "bad.txt") << "0\n1\nx\n0\n";
  try {
    (void)read_trace(dir / "bad.txt");
    FAIL("malformed trace accepted");
  } catch (const ChannelError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
  std::ofstream(dir / "empty.txt").flush();
  CHECK_THROWS_AS(read_trace(dir / "empty.txt"), ChannelError);
  CHECK_THROWS_AS(read_trace(dir / "nope.txt"), ChannelError);
  CHECK_THROWS_AS(write_trace(dir / "w.txt", LossTrace{}), ChannelError);
}

}
