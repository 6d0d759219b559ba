#include <doctest.h>

#include "bsplc/generator.hpp"
#include "bsplc/synthetic.hpp"
#include "test_util.hpp"

using namespace bsplc;
using spectral::kBins;

namespace {

// Parameter count written out layer by layer from the configuration alone.
std::size_t analytic_count(const GeneratorConfig& c) {
  auto conv = [](std::size_t cin, std::size_t cout, std::size_t kh, std::size_t kw) { return cout * cin * kh * kw + cout; };
  auto linear = [](std::size_t in, std::size_t out) { return out * in + out; };
  auto lstm = [](std::size_t in, std::size_t h) { return 4 * h * in + 4 * h * h + 4 * h; };
  auto gru = [](std::size_t in, std::size_t h) { return 3 * h * in + 3 * h * h + 6 * h; };

  int w = 161;
  for (int s : c.freq_strides) w = (w - 1) / s + 1;
  const std::size_t Fb = w;
  const auto& ch = c.encoder_channels;
  const std::size_t C = ch[3], H = c.ftlstm_hidden;

  std::size_t n = 0;
  for (int i = 0; i < 4; ++i) n += conv(i == 0 ? (c.include_loss_flag_input ? 3 : 2) : ch[i - 1], 2 * ch[i], 2, 5);
  for (int j = 0; j < 4; ++j) n += (C * 9 + C) + conv(C, 2 * C, 1, 1);
  n += 2 * lstm(C, H / 2) + linear(H, C) + lstm(C, H) + linear(H, C);
  n += linear(C, 2 * Fb) + gru(C * Fb, c.f0_head_hidden) + linear(c.f0_head_hidden, 1);
  for (int i = 0; i < 4; ++i) n += conv(2 * ch[i], i > 0 ? 2 * ch[i - 1] : 2, 2, 5);
  n += conv(2, c.highband_channels, 2, spectral::kHighBins) + 2 * c.highband_channels;
  n += gru(c.highband_channels, c.highband_gru_hidden) + linear(c.highband_gru_hidden, 2 * spectral::kHighBins);
  return n;
}

struct Input {
  spectral::CompressedBandPair bands;
  spectral::RealSpectrogram full;
  std::vector<bool> flags;
};

Input speech_input(double seconds, std::uint64_t seed) {
  const spectral::StftConfig cfg;
  Input in;
  in.full = spectral::compress(spectral::stft(synthetic_speech(seconds, seed), cfg), cfg.compression);
  in.bands = spectral::band_split(in.full);
  for (int t = 0; t < in.full.frames; ++t) in.flags.push_back((t / 6) % 3 == 2);
  return in;
}

std::vector<Generator::Frame> stream(const Generator& g, GeneratorState& st, const Input& in) {
  std::vector<Generator::Frame> out;
  for (int t = 0; t < in.full.frames; ++t)
    out.push_back(g.streaming_step(st, in.full.data.data() + static_cast<std::size_t>(t) * kBins * 2, in.flags[t]));
  return out;
}

}  // namespace

TEST_SUITE("layers") {

TEST_CASE("parameter sets register, look up and reject duplicates") {
  nn::ParamSet ps;
  Rng rng(1);
  nn::Linear lin(ps, "a", 3, 4, rng);
  nn::BatchNorm bn(ps, "bn", 5);
  CHECK(ps.count_trainable() == 3 * 4 + 4 + 10);
  CHECK(ps.entries().size() == 6);
  CHECK(ps.get("a.weight").shape() == ad::Shape{4, 3});
  CHECK_THROWS_AS(ps.get("nope"), std::out_of_range);
  CHECK_THROWS_AS(ps.add("a.bias", {1}), std::logic_error);
  CHECK_THROWS_AS(nn::Linear(ps, "z", 0, 2, rng), std::invalid_argument);
}

TEST_CASE("layer parameter shapes") {
  nn::ParamSet ps;
  Rng rng(2);
  nn::Lstm l(ps, "l", 3, 5, rng);
  nn::Gru g(ps, "g", 3, 5, rng);
  CHECK(l.w_ih.shape() == ad::Shape{20, 3});
  CHECK(l.w_hh.shape() == ad::Shape{20, 5});
  CHECK(g.w_ih.shape() == ad::Shape{15, 3});
  CHECK(ps.count_trainable() == (20 * 3 + 20 * 5 + 20) + (15 * 3 + 15 * 5 + 30));
}

TEST_CASE("batch norm updates running statistics only in training mode") {
  nn::ParamSet ps;
  nn::BatchNorm bn(ps, "bn", 2);
  ps.get("bn.gamma").node()->value = {1.0, 1.0};
  const ad::Var x({1, 2, 3}, {1, 2, 3, 10, 20, 30});
  (void)bn(x, false);
  CHECK(bn.running_mean.value() == std::vector<double>{0.0, 0.0});
  (void)bn(x, true);
  CHECK(bn.running_mean.value()[0] == doctest::Approx(bn.momentum * 2.0));
  CHECK(bn.running_mean.value()[1] == doctest::Approx(bn.momentum * 20.0));
  CHECK(bn.running_var.value()[0] == doctest::Approx((1.0 - bn.momentum) + bn.momentum * 1.0));
}

}

TEST_SUITE("generator") {

TEST_CASE("parameter count matches the layer-by-layer formula") {
  const Generator toy(GeneratorConfig::toy(), 1);
  CHECK(toy.count_parameters() == analytic_count(GeneratorConfig::toy()));
  CHECK(toy.count_parameters() == 487961);
  auto noflag = GeneratorConfig::toy();
  noflag.include_loss_flag_input = false;
  CHECK(Generator(noflag, 1).count_parameters() == analytic_count(noflag));
  const Generator base(GeneratorConfig::base(), 1);
  CHECK(base.count_parameters() == analytic_count(GeneratorConfig::base()));
  CHECK(base.count_parameters() > toy.count_parameters());
  MESSAGE("base preset parameters: " << base.count_parameters());
}

TEST_CASE("initialisation is deterministic in the seed") {
  const Generator a(GeneratorConfig::toy(), 7), b(GeneratorConfig::toy(), 7), c(GeneratorConfig::toy(), 8);
  CHECK(a.params().checksum() == b.params().checksum());
  CHECK(a.params().checksum() != c.params().checksum());
  const Input in = speech_input(0.2, 3);
  CHECK(a.forward(in.bands, in.flags).full_band_compressed.data == b.forward(in.bands, in.flags).full_band_compressed.data);
}

TEST_CASE("output shapes and pitch range") {
  const Generator g(GeneratorConfig::toy(), 2);
  const Input in = speech_input(0.2, 4);
  REQUIRE(in.full.frames == 20);
  const auto out = g.forward(in.bands, in.flags);
  CHECK(out.full_band_compressed.frames == 20);
  CHECK(out.full_band_compressed.bins == kBins);
  CHECK(out.full_band_compressed.data.size() == 20u * kBins * 2);
  REQUIRE(out.f0_pred.size() == 20);
  for (double f : out.f0_pred) {
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
  }

  const ad::Var wide({2, 20, spectral::kWideBins, 2}, testutil::random_vec(2 * 20 * 161 * 2, 5));
  const ad::Var high({2, 20, spectral::kHighBins, 2}, testutil::random_vec(2 * 20 * 320 * 2, 6));
  const auto b = g.forward(wide, high, std::vector<double>(40, 0.0), true);
  CHECK(b.full.shape() == ad::Shape{2, 20, kBins, 2});
  CHECK(b.f0.shape() == ad::Shape{2, 20});
  CHECK_THROWS_AS(g.forward(wide, high, std::vector<double>(39, 0.0), true), ad::ShapeError);
}

TEST_CASE("outputs never depend on future frames") {
  const Generator g(GeneratorConfig::toy(), 3);
  Input in = speech_input(0.3, 5);
  const auto ref = g.forward(in.bands, in.flags);
  const int t0 = 17;
  Input pert = in;
  for (std::size_t i = static_cast<std::size_t>(t0) * 161 * 2; i < pert.bands.wide.size(); ++i) pert.bands.wide[i] += 0.5;
  for (std::size_t i = static_cast<std::size_t>(t0) * 320 * 2; i < pert.bands.high.size(); ++i) pert.bands.high[i] -= 0.25;
  for (std::size_t t = t0; t < pert.flags.size(); ++t) pert.flags[t] = !pert.flags[t];
  const auto out = g.forward(pert.bands, pert.flags);
  const std::size_t n = static_cast<std::size_t>(t0) * kBins * 2;
  CHECK(std::equal(ref.full_band_compressed.data.begin(), ref.full_band_compressed.data.begin() + n,
                   out.full_band_compressed.data.begin()));
  CHECK(std::equal(ref.f0_pred.begin(), ref.f0_pred.begin() + t0, out.f0_pred.begin()));
  // and the perturbation does reach frame t0
  CHECK(out.full_band_compressed.data[n + 5] != ref.full_band_compressed.data[n + 5]);
}

TEST_CASE("streaming agrees with whole-utterance inference") {
  for (const auto& cfg : {GeneratorConfig::toy(), GeneratorConfig::base()}) {
    const Generator g(cfg, 4);
    const Input in = speech_input(0.4, 6);
    const auto batch = g.forward(in.bands, in.flags);
    auto st = g.make_state();
    const auto frames = stream(g, st, in);
    double worst = 0.0, worst_f0 = 0.0;
    for (int t = 0; t < in.full.frames; ++t) {
      for (int k = 0; k < kBins * 2; ++k)
        worst = std::max(worst, std::abs(frames[t].spectrum[k] - batch.full_band_compressed.data[t * kBins * 2 + k]));
      worst_f0 = std::max(worst_f0, std::abs(frames[t].f0 - batch.f0_pred[t]));
    }
    CHECK(worst <= 1e-9);
    CHECK(worst_f0 <= 1e-9);
    CHECK(st.frames_processed() == in.full.frames);
  }
}

TEST_CASE("independent streams do not interfere and reset restores the initial state") {
  const Generator g(GeneratorConfig::toy(), 5);
  const Input a = speech_input(0.2, 7), b = speech_input(0.2, 8);
  auto sa = g.make_state(), sb = g.make_state();
  const auto ra = stream(g, sa, a), rb = stream(g, sb, b);

  auto ia = g.make_state(), ib = g.make_state();
  for (int t = 0; t < a.full.frames; ++t) {
    const auto fa = g.streaming_step(ia, a.full.data.data() + t * kBins * 2, a.flags[t]);
    const auto fb = g.streaming_step(ib, b.full.data.data() + t * kBins * 2, b.flags[t]);
    CHECK(fa.spectrum == ra[t].spectrum);
    CHECK(fb.spectrum == rb[t].spectrum);
  }

  ia.reset();
  CHECK(ia.frames_processed() == 0);
  CHECK(ia.lost_run() == 0);
  const auto again = stream(g, ia, a);
  for (int t = 0; t < a.full.frames; ++t) CHECK(again[t].spectrum == ra[t].spectrum);

  GeneratorState foreign = Generator(GeneratorConfig::base(), 5).make_state();
  CHECK_THROWS_AS(g.streaming_step(foreign, a.full.data.data(), false), std::invalid_argument);
}

TEST_CASE("non-finite input and invalid configurations are rejected") {
  const Generator g(GeneratorConfig::toy(), 6);
  Input in = speech_input(0.1, 9);
  in.bands.wide[11] = std::nan("");
  CHECK_THROWS_AS(g.forward(in.bands, in.flags), std::invalid_argument);
  auto st = g.make_state();
  std::vector<double> frame(kBins * 2, 0.0);
  frame[3] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(g.streaming_step(st, frame.data(), false), std::invalid_argument);

  auto bad = GeneratorConfig::toy();
  bad.ftlstm_hidden = 33;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = GeneratorConfig::toy();
  bad.encoder_channels[2] = 0;
  CHECK_THROWS_AS(Generator(bad, 1), std::invalid_argument);
  bad = GeneratorConfig::toy();
  bad.freq_strides = {8, 8, 8, 8};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(GeneratorConfig::preset_named("huge"), std::invalid_argument);
  CHECK(GeneratorConfig::preset_named("base") == GeneratorConfig::base());
}

}
