#include "bsplc/discriminators.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "bsplc/metrics.hpp"
#include "bsplc/spectral.hpp"

namespace bsplc {

using ad::Var;
namespace K = kernels;

namespace {

constexpr double kSlope = 0.1;

void require_positive(const std::vector<int>& v, const char* what) {
  if (v.empty()) throw std::invalid_argument(std::string(what) + " must not be empty");
  for (int x : v)
    if (x < 1) throw std::invalid_argument(std::string(what) + " must be positive");
}

}  // namespace

void MpdConfig::validate() const {
  require_positive(periods, "MPD periods");
  require_positive(channels, "MPD channels");
  for (std::size_t i = 0; i < periods.size(); ++i)
    for (std::size_t j = i + 1; j < periods.size(); ++j)
      if (std::gcd(periods[i], periods[j]) != 1) throw std::invalid_argument("MPD periods must be pairwise coprime");
}

void MfdConfig::validate() const {
  require_positive(window_lengths, "MFD windows");
  require_positive(channels, "MFD channels");
  for (std::size_t i = 0; i < window_lengths.size(); ++i) {
    if (window_lengths[i] % 4) throw std::invalid_argument("MFD windows must be multiples of 4");
    if (i && window_lengths[i] <= window_lengths[i - 1])
      throw std::invalid_argument("MFD windows must be strictly increasing");
  }
}

void MetricDConfig::validate() const {
  require_positive(channels, "metric critic channels");
  if (hidden < 1) throw std::invalid_argument("metric critic hidden size must be positive");
  if (!(compression > 0.0)) throw std::invalid_argument("metric critic compression must be positive");
}

// --- multi-period -------------------------------------------------------------

MultiPeriodDiscriminator::MultiPeriodDiscriminator(const MpdConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(seed, 0x6d7064));
  for (int p : cfg_.periods) {
    Branch br;
    br.period = p;
    const std::string name = "mpd.p" + std::to_string(p);
    int cin = 1;
    const int n = static_cast<int>(cfg_.channels.size());
    for (int l = 0; l <= n; ++l) {
      K::Conv2dGeometry g;
      g.cin = cin;
      g.cout = cfg_.channels[std::min(l, n - 1)];
      g.kw = 5;
      g.sw = l < n ? 3 : 1;
      g.pad_left = g.pad_right = 2;
      br.convs.emplace_back(params_, name + ".conv" + std::to_string(l), g, rng);
      cin = g.cout;
    }
    K::Conv2dGeometry h;
    h.cin = cin;
    h.cout = 1;
    h.kw = 3;
    h.pad_left = h.pad_right = 1;
    br.head = nn::Conv2d(params_, name + ".head", h, rng);
    branches_.push_back(std::move(br));
  }
}

std::pair<int, int> MultiPeriodDiscriminator::fold_shape(int length, int period) {
  const int rows = (length + period - 1) / period;
  return {rows, period};
}

DiscriminatorOutput MultiPeriodDiscriminator::forward(const Var& wave) const {
  if (wave.rank() != 2) throw ad::ShapeError("mpd: wave must be [B,N]");
  const int B = wave.dim(0), N = wave.dim(1);
  const int pmax = *std::max_element(cfg_.periods.begin(), cfg_.periods.end());
  if (N < pmax) throw ad::ShapeError("mpd: input of " + std::to_string(N) + " samples is shorter than period " + std::to_string(pmax));
  DiscriminatorOutput out;
  for (const auto& br : branches_) {
    const auto [rows, p] = fold_shape(N, br.period);
    Var x = wave;
    if (rows * p > N) x = ops::concat({x, Var::zeros({B, rows * p - N})}, 1);
    // Convolve along the folded time axis with the period phases as rows, so
    // the row kernels see long rows instead of rows of length p.
    x = ops::permute(ops::reshape(x, {B, 1, rows, p}), {0, 1, 3, 2});
    std::vector<Var> feats;
    for (const auto& conv : br.convs) {
      x = ops::leaky_relu(conv(x), kSlope);
      feats.push_back(x);
    }
    x = br.head(x);
    feats.push_back(x);
    out.score_maps.push_back(x);
    out.feature_maps.push_back(std::move(feats));
  }
  return out;
}

void MultiPeriodDiscriminator::zero_heads() {
  for (auto& br : branches_) std::fill(br.head.weight.value_mut().begin(), br.head.weight.value_mut().end(), 0.0);
}

// --- multi-resolution spectral -------------------------------------------------

MultiFrequencyDiscriminator::MultiFrequencyDiscriminator(const MfdConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(seed, 0x6d6664));
  for (int w : cfg_.window_lengths) {
    Branch br;
    br.window = w;
    br.hann = spectral::hann(w);
    const std::string name = "mfd.w" + std::to_string(w);
    int cin = 1;
    for (std::size_t l = 0; l < cfg_.channels.size(); ++l) {
      K::Conv2dGeometry g;
      g.cin = cin;
      g.cout = cfg_.channels[l];
      g.kh = g.kw = 3;
      g.sh = g.sw = 2;
      g.pad_top = g.pad_bottom = g.pad_left = g.pad_right = 1;
      br.convs.emplace_back(params_, name + ".conv" + std::to_string(l), g, rng);
      cin = g.cout;
    }
    K::Conv2dGeometry h;
    h.cin = cin;
    h.cout = 1;
    h.kh = h.kw = 3;
    h.pad_top = h.pad_bottom = h.pad_left = h.pad_right = 1;
    br.head = nn::Conv2d(params_, name + ".head", h, rng);
    branches_.push_back(std::move(br));
  }
}

DiscriminatorOutput MultiFrequencyDiscriminator::forward(const Var& wave) const {
  if (wave.rank() != 2) throw ad::ShapeError("mfd: wave must be [B,N]");
  const int B = wave.dim(0), N = wave.dim(1);
  if (N < cfg_.window_lengths.back())
    throw ad::ShapeError("mfd: input of " + std::to_string(N) + " samples is shorter than window " +
                         std::to_string(cfg_.window_lengths.back()));
  DiscriminatorOutput out;
  for (const auto& br : branches_) {
    const int hop = br.window / 4;
    const int frames = (N - br.window) / hop + 1;
    Var spec = ops::stft(wave, br.hann, hop, 0, frames);
    Var x = ops::complex_abs(spec, 1e-9);  // [B,T,F]
    x = ops::reshape(x, {B, 1, frames, br.window / 2 + 1});
    std::vector<Var> feats;
    for (const auto& conv : br.convs) {
      x = ops::leaky_relu(conv(x), kSlope);
      feats.push_back(x);
    }
    x = br.head(x);
    feats.push_back(x);
    out.score_maps.push_back(x);
    out.feature_maps.push_back(std::move(feats));
  }
  return out;
}

void MultiFrequencyDiscriminator::zero_heads() {
  for (auto& br : branches_) std::fill(br.head.weight.value_mut().begin(), br.head.weight.value_mut().end(), 0.0);
}

// --- metric critic -------------------------------------------------------------

MetricDiscriminator::MetricDiscriminator(const MetricDConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(seed, 0x6d6574));
  int cin = 2;
  for (std::size_t l = 0; l < cfg_.channels.size(); ++l) {
    K::Conv2dGeometry g;
    g.cin = cin;
    g.cout = cfg_.channels[l];
    g.kh = g.kw = 5;
    g.sh = g.sw = 2;
    g.pad_top = g.pad_bottom = g.pad_left = g.pad_right = 2;
    convs_.emplace_back(params_, "metric.conv" + std::to_string(l), g, rng);
    cin = g.cout;
  }
  fc1_ = nn::Linear(params_, "metric.fc1", cin, cfg_.hidden, rng);
  fc2_ = nn::Linear(params_, "metric.fc2", cfg_.hidden, 1, rng);
}

Var MetricDiscriminator::forward(const Var& enhanced_mag, const Var& clean_mag) const {
  if (enhanced_mag.rank() != 3 || enhanced_mag.shape() != clean_mag.shape())
    throw ad::ShapeError("metric critic: inputs must be matching [B,T,F], got " + ad::shape_str(enhanced_mag.shape()) +
                         " and " + ad::shape_str(clean_mag.shape()));
  const int B = enhanced_mag.dim(0), T = enhanced_mag.dim(1), F = enhanced_mag.dim(2);
  auto squash = [&](const Var& m) { return ops::reshape(ops::pow_eps(m, cfg_.compression, 1e-8), {B, 1, T, F}); };
  Var x = ops::concat({squash(enhanced_mag), squash(clean_mag)}, 1);
  for (const auto& conv : convs_) x = ops::leaky_relu(conv(x), kSlope);
  x = ops::mean_axis(ops::mean_axis(x, 3), 2);  // [B,C]
  x = ops::leaky_relu(fc1_(x), kSlope);
  return ops::reshape(ops::sigmoid(fc2_(x)), {B});
}

double target_metric_q(std::span<const double> enhanced, std::span<const double> clean) {
  const double sdr = metrics::si_sdr(enhanced, clean);
  return std::clamp((sdr + 10.0) / 30.0, 0.0, 1.0);
}

double target_metric_q(const Waveform& enhanced, const Waveform& clean) {
  return target_metric_q(std::span<const double>(enhanced.samples), std::span<const double>(clean.samples));
}

}  // namespace bsplc
