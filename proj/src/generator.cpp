#include "bsplc/generator.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bsplc {

using ad::Var;
namespace K = kernels;

namespace {

constexpr int kEncKh = 2, kEncKw = 5, kEncPad = 2;

int crop_right(int w_in, int w_out, int stride) { return (w_out - 1) * stride + kEncKw - w_in - kEncPad; }

std::string join(const std::array<int, 4>& a) {
  std::ostringstream os;
  for (std::size_t i = 0; i < a.size(); ++i) os << (i ? "," : "") << a[i];
  return os.str();
}

void check_finite(const Var& v, const char* what) {
  for (double x : v.value())
    if (!std::isfinite(x)) throw std::invalid_argument(std::string("generator: non-finite value in ") + what);
}

}  // namespace

GeneratorConfig GeneratorConfig::toy() { return GeneratorConfig{}; }

GeneratorConfig GeneratorConfig::base() {
  GeneratorConfig c;
  c.preset = "base";
  c.encoder_channels = {16, 32, 64, 96};
  c.ftlstm_hidden = 128;
  c.f0_head_hidden = 64;
  return c;
}

GeneratorConfig GeneratorConfig::preset_named(const std::string& name) {
  if (name == "toy") return toy();
  if (name == "base") return base();
  throw std::invalid_argument("unknown generator preset '" + name + "' (expected toy or base)");
}

std::array<int, 5> GeneratorConfig::widths() const {
  std::array<int, 5> w{spectral::kWideBins};
  for (int i = 0; i < 4; ++i) w[i + 1] = (w[i] + 2 * kEncPad - kEncKw) / freq_strides[i] + 1;
  return w;
}

void GeneratorConfig::validate() const {
  for (int c : encoder_channels)
    if (c < 1) throw std::invalid_argument("encoder channels must be >= 1");
  for (int s : freq_strides)
    if (s < 1) throw std::invalid_argument("frequency strides must be >= 1");
  for (int d : tfdcm_dilations)
    if (d < 1) throw std::invalid_argument("dilations must be >= 1");
  if (ftlstm_hidden < 2 || ftlstm_hidden % 2)
    throw std::invalid_argument("ftlstm_hidden must be an even number >= 2");
  if (highband_channels < 1 || highband_gru_hidden < 1 || f0_head_hidden < 1)
    throw std::invalid_argument("high-band and pitch-head sizes must be >= 1");
  const auto w = widths();
  for (int i = 0; i < 4; ++i) {
    if (w[i + 1] < 1) throw std::invalid_argument("frequency strides collapse the band");
    if (crop_right(w[i], w[i + 1], freq_strides[i]) < 0)
      throw std::invalid_argument("decoder stage cannot restore width " + std::to_string(w[i]));
  }
}

std::string GeneratorConfig::describe() const {
  std::ostringstream os;
  os << "preset = " << preset << "\n"
     << "encoder_channels = " << join(encoder_channels) << "\n"
     << "freq_strides = " << join(freq_strides) << "\n"
     << "tfdcm_dilations = " << join(tfdcm_dilations) << "\n"
     << "ftlstm_hidden = " << ftlstm_hidden << "\n"
     << "highband_channels = " << highband_channels << "\n"
     << "highband_gru_hidden = " << highband_gru_hidden << "\n"
     << "f0_head_hidden = " << f0_head_hidden << "\n"
     << "include_loss_flag_input = " << (include_loss_flag_input ? "true" : "false") << "\n";
  return os.str();
}

Generator::Generator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  widths_ = cfg_.widths();
  in_channels_ = cfg_.include_loss_flag_input ? 3 : 2;
  Rng rng(derive_seed(seed, 0x6e6567));
  const auto& ch = cfg_.encoder_channels;
  const int C = ch[3];
  const int Fb = widths_[4];

  for (int i = 0; i < 4; ++i) {
    K::Conv2dGeometry g;
    g.cin = i == 0 ? in_channels_ : ch[i - 1];
    g.cout = 2 * ch[i];
    g.kh = kEncKh;
    g.kw = kEncKw;
    g.sw = cfg_.freq_strides[i];
    g.pad_top = kEncKh - 1;
    g.pad_left = g.pad_right = kEncPad;
    enc_[i] = nn::Conv2d(params_, "enc" + std::to_string(i), g, rng);
  }
  for (int j = 0; j < 4; ++j) {
    const int d = cfg_.tfdcm_dilations[j];
    K::Conv2dGeometry dw;
    dw.cin = dw.cout = dw.groups = C;
    dw.kh = dw.kw = 3;
    dw.dh = d;
    dw.pad_top = 2 * d;
    dw.pad_left = dw.pad_right = 1;
    tfd_dw_[j] = nn::Conv2d(params_, "tfdcm" + std::to_string(j) + ".depthwise", dw, rng);
    K::Conv2dGeometry pw;
    pw.cin = C;
    pw.cout = 2 * C;
    tfd_pw_[j] = nn::Conv2d(params_, "tfdcm" + std::to_string(j) + ".pointwise", pw, rng);
  }
  const int H = cfg_.ftlstm_hidden;
  f_fwd_ = nn::Lstm(params_, "ftlstm.freq_fwd", C, H / 2, rng);
  f_bwd_ = nn::Lstm(params_, "ftlstm.freq_bwd", C, H / 2, rng);
  f_proj_ = nn::Linear(params_, "ftlstm.freq_proj", H, C, rng);
  t_lstm_ = nn::Lstm(params_, "ftlstm.time", C, H, rng);
  t_proj_ = nn::Linear(params_, "ftlstm.time_proj", H, C, rng);

  film_ = nn::Linear(params_, "f0.film", C, 2 * Fb, rng);
  f0_gru_ = nn::Gru(params_, "f0.gru", C * Fb, cfg_.f0_head_hidden, rng);
  f0_out_ = nn::Linear(params_, "f0.out", cfg_.f0_head_hidden, 1, rng);

  for (int i = 3; i >= 0; --i) {
    K::ConvTransposeGeometry g;
    g.cin = 2 * ch[i];
    g.cout = i > 0 ? 2 * ch[i - 1] : 2;
    g.kh = kEncKh;
    g.kw = kEncKw;
    g.sw = cfg_.freq_strides[i];
    g.crop_left = kEncPad;
    g.crop_right = crop_right(widths_[i], widths_[i + 1], g.sw);
    dec_[i] = nn::ConvTranspose(params_, "dec" + std::to_string(i), g, rng);
  }

  K::Conv2dGeometry hg;
  hg.cin = 2;
  hg.cout = cfg_.highband_channels;
  hg.kh = 2;
  hg.kw = spectral::kHighBins;
  hg.pad_top = 1;
  high_conv_ = nn::Conv2d(params_, "high.conv", hg, rng);
  high_bn_ = nn::BatchNorm(params_, "high.bn", cfg_.highband_channels);
  high_gru_ = nn::Gru(params_, "high.gru", cfg_.highband_channels, cfg_.highband_gru_hidden, rng);
  high_out_ = nn::Linear(params_, "high.out", cfg_.highband_gru_hidden, 2 * spectral::kHighBins, rng);
}

Generator::Batch Generator::forward(const Var& wide, const Var& high, const std::vector<double>& flags,
                                    bool training) const {
  using namespace ops;
  if (wide.rank() != 4 || wide.dim(2) != spectral::kWideBins || wide.dim(3) != 2)
    throw ad::ShapeError("generator: wide input must be [B,T,161,2], got " + ad::shape_str(wide.shape()));
  const int B = wide.dim(0), T = wide.dim(1);
  if (high.shape() != ad::Shape{B, T, spectral::kHighBins, 2})
    throw ad::ShapeError("generator: high input must be [B,T,320,2], got " + ad::shape_str(high.shape()));
  if (flags.size() != static_cast<std::size_t>(B) * T) throw ad::ShapeError("generator: need one loss flag per frame");
  check_finite(wide, "wide input");
  check_finite(high, "high input");
  const int C = cfg_.encoder_channels[3];
  const int Fb = widths_[4];

  // wide path
  Var x = permute(wide, {0, 3, 1, 2});  // [B,2,T,161]
  if (cfg_.include_loss_flag_input) {
    std::vector<double> plane(static_cast<std::size_t>(B) * T * spectral::kWideBins);
    for (int b = 0; b < B; ++b)
      for (int t = 0; t < T; ++t)
        for (int f = 0; f < spectral::kWideBins; ++f)
          plane[(static_cast<std::size_t>(b) * T + t) * spectral::kWideBins + f] = flags[static_cast<std::size_t>(b) * T + t];
    x = concat({x, Var({B, 1, T, spectral::kWideBins}, std::move(plane))}, 1);
  }
  std::array<Var, 4> skips;
  for (int i = 0; i < 4; ++i) {
    x = glu(enc_[i](x), 1);
    skips[i] = x;
  }
  for (int j = 0; j < 4; ++j) x = add(x, glu(tfd_pw_[j](tfd_dw_[j](x)), 1));

  // frequency recurrence within each frame, then causal recurrence over time
  Var q = reshape(permute(x, {0, 2, 3, 1}), {B * T, Fb, C});
  Var hf = concat({f_fwd_(q), f_bwd_(q, true)}, 2);
  q = add(q, f_proj_(hf));
  Var s = reshape(permute(reshape(q, {B, T, Fb, C}), {0, 2, 1, 3}), {B * Fb, T, C});
  s = add(s, t_proj_(t_lstm_(s)));
  Var z = permute(reshape(s, {B, Fb, T, C}), {0, 3, 2, 1});  // [B,C,T,Fb]

  // pitch head
  Var ctx = permute(cumulative_mean(mean_axis(z, 3), 2), {0, 2, 1});  // [B,T,C]
  Var mod = film_(ctx);                                                // [B,T,2Fb]
  Var gamma = add_scalar(slice(mod, 2, 0, Fb), 1.0);
  Var beta = slice(mod, 2, Fb, Fb);
  Var fz = reshape(permute(film(z, gamma, beta), {0, 2, 1, 3}), {B, T, C * Fb});
  Var f0 = reshape(sigmoid(f0_out_(f0_gru_(fz))), {B, T});

  Var d = z;
  for (int i = 3; i >= 0; --i) {
    d = dec_[i](concat({d, skips[i]}, 1));
    if (i > 0) d = glu(d, 1);
  }
  Var wide_out = permute(d, {0, 2, 3, 1});  // [B,T,161,2]

  // high path
  Var h = elu(high_conv_(permute(high, {0, 3, 1, 2})));  // [B,Ch,T,1]
  h = high_bn_(h, training);
  h = reshape(permute(h, {0, 2, 1, 3}), {B, T, cfg_.highband_channels});
  Var high_out = reshape(high_out_(high_gru_(h)), {B, T, spectral::kHighBins, 2});

  return {concat({wide_out, high_out}, 2), f0};
}

GeneratorOutput Generator::forward(const spectral::CompressedBandPair& input, const std::vector<bool>& loss_flags) const {
  const int T = input.frames;
  if (input.wide.size() != static_cast<std::size_t>(T) * spectral::kWideBins * 2 ||
      input.high.size() != static_cast<std::size_t>(T) * spectral::kHighBins * 2)
    throw ad::ShapeError("generator: band pair does not match its frame count");
  if (loss_flags.size() != static_cast<std::size_t>(T)) throw ad::ShapeError("generator: need one loss flag per frame");
  ad::NoGradGuard guard;
  std::vector<double> flags(loss_flags.begin(), loss_flags.end());
  Batch b = forward(Var({1, T, spectral::kWideBins, 2}, input.wide), Var({1, T, spectral::kHighBins, 2}, input.high),
                    flags, false);
  GeneratorOutput out;
  out.full_band_compressed.frames = T;
  out.full_band_compressed.bins = spectral::kBins;
  out.full_band_compressed.data = b.full.value();
  out.f0_pred = b.f0.value();
  return out;
}

void GeneratorState::reset() {
  t_ = 0;
  lost_run_ = 0;
  for (auto* group : {&enc, &tfd, &dec})
    for (auto& h : *group) std::fill(h.buf.begin(), h.buf.end(), 0.0);
  std::fill(high.buf.begin(), high.buf.end(), 0.0);
  for (auto* v : {&t_h, &t_c, &ctx_sum, &f0_h, &high_h}) std::fill(v->begin(), v->end(), 0.0);
}

GeneratorState Generator::make_state() const {
  auto hist = [](int channels, int width, int depth) {
    GeneratorState::History h;
    h.channels = channels;
    h.width = width;
    h.depth = depth;
    h.buf.assign(static_cast<std::size_t>(channels) * width * depth, 0.0);
    return h;
  };
  GeneratorState st;
  for (int i = 0; i < 4; ++i) st.enc.push_back(hist(enc_[i].g.cin, widths_[i], kEncKh));
  for (int j = 0; j < 4; ++j) st.tfd.push_back(hist(tfd_dw_[j].g.cin, widths_[4], 2 * cfg_.tfdcm_dilations[j] + 1));
  for (int i = 0; i < 4; ++i) st.dec.push_back(hist(dec_[i].g.cin, widths_[i + 1], kEncKh));
  st.high = hist(2, spectral::kHighBins, 2);
  const int Fb = widths_[4];
  st.t_h.assign(static_cast<std::size_t>(Fb) * cfg_.ftlstm_hidden, 0.0);
  st.t_c = st.t_h;
  st.ctx_sum.assign(cfg_.encoder_channels[3], 0.0);
  st.f0_h.assign(cfg_.f0_head_hidden, 0.0);
  st.high_h.assign(cfg_.highband_gru_hidden, 0.0);
  st.config_tag = cfg_.describe();
  return st;
}

namespace {

// Output frame t of a causal convolution whose input frames live in `h`.
std::vector<double> conv_step(const nn::Conv2d& layer, GeneratorState::History& h, long t) {
  const int w = h.width;
  auto row = [&](int c, int hi) -> const double* {
    if (hi < 0) return nullptr;
    return h.slot(hi) + static_cast<std::size_t>(c) * w;
  };
  const int wo = layer.g.out_w(w);
  std::vector<double> col(static_cast<std::size_t>(layer.g.col_rows()) * wo);
  std::vector<double> out(static_cast<std::size_t>(layer.g.cout) * wo);
  K::conv2d_row(layer.g, w, static_cast<int>(t), row, layer.weight.data(), layer.bias.data(), col.data(), out.data(),
                static_cast<std::size_t>(wo));
  return out;
}

std::vector<double> pointwise_step(const nn::Conv2d& layer, const std::vector<double>& x, int w) {
  auto row = [&](int c, int) -> const double* { return x.data() + static_cast<std::size_t>(c) * w; };
  std::vector<double> col(static_cast<std::size_t>(layer.g.col_rows()) * w);
  std::vector<double> out(static_cast<std::size_t>(layer.g.cout) * w);
  K::conv2d_row(layer.g, w, 0, row, layer.weight.data(), layer.bias.data(), col.data(), out.data(),
                static_cast<std::size_t>(w));
  return out;
}

std::vector<double> glu_frame(std::vector<double> v, int channels, int w) {
  return ops::glu(Var({1, channels, 1, w}, std::move(v)), 1).value();
}

// One GRU step on a single row.
void gru_step(const nn::Gru& g, const double* x, std::vector<double>& h) {
  const int H = g.hidden, G = 3 * H;
  std::vector<double> xg(G), hg(G), rzn(G), hn(H);
  K::parallel::linear_forward(1, g.input, G, x, g.w_ih.data(), g.b_ih.data(), xg.data());
  const auto whh_t = K::transpose(g.w_hh.data(), G, H);
  K::gru_cell(1, H, whh_t.data(), g.b_hh.data(), xg.data(), h.data(), hg.data(), rzn.data(), hn.data());
  h = std::move(hn);
}

}  // namespace

Generator::Frame Generator::streaming_step(GeneratorState& st, const double* frame, bool loss_flag) const {
  using namespace ops;
  if (st.config_tag != cfg_.describe())
    throw std::invalid_argument("generator state was created for a different configuration");
  for (int i = 0; i < 2 * spectral::kBins; ++i)
    if (!std::isfinite(frame[i])) throw std::invalid_argument("generator: non-finite value in frame");
  ad::NoGradGuard guard;
  const long t = st.t_;
  const auto& ch = cfg_.encoder_channels;
  const int C = ch[3];
  const int Fb = widths_[4];
  const int W0 = widths_[0];

  std::vector<double> x(static_cast<std::size_t>(in_channels_) * W0);
  for (int f = 0; f < W0; ++f) {
    x[f] = frame[2 * f];
    x[W0 + f] = frame[2 * f + 1];
    if (cfg_.include_loss_flag_input) x[2 * W0 + f] = loss_flag ? 1.0 : 0.0;
  }
  std::array<std::vector<double>, 4> skips;
  for (int i = 0; i < 4; ++i) {
    std::copy(x.begin(), x.end(), st.enc[i].slot(t));
    x = glu_frame(conv_step(enc_[i], st.enc[i], t), 2 * ch[i], widths_[i + 1]);
    skips[i] = x;
  }
  for (int j = 0; j < 4; ++j) {
    std::copy(x.begin(), x.end(), st.tfd[j].slot(t));
    std::vector<double> y = conv_step(tfd_dw_[j], st.tfd[j], t);
    y = glu_frame(pointwise_step(tfd_pw_[j], y, Fb), 2 * C, Fb);
    x = add(Var({1, C, 1, Fb}, std::move(x)), Var({1, C, 1, Fb}, std::move(y))).value();
  }

  // [C][Fb] -> [Fb][C]
  Var q = permute(Var({1, C, 1, Fb}, x), {0, 2, 3, 1});
  q = reshape(q, {1, Fb, C});
  q = add(q, f_proj_(concat({f_fwd_(q), f_bwd_(q, true)}, 2)));
  {
    const int H = cfg_.ftlstm_hidden, G = 4 * H;
    std::vector<double> gates(static_cast<std::size_t>(Fb) * G), hn(st.t_h.size()), cn(st.t_c.size());
    K::parallel::linear_forward(Fb, C, G, q.data(), t_lstm_.w_ih.data(), t_lstm_.bias.data(), gates.data());
    const auto whh_t = K::transpose(t_lstm_.w_hh.data(), G, H);
    K::lstm_cell(Fb, H, whh_t.data(), st.t_h.data(), st.t_c.data(), gates.data(), hn.data(), cn.data());
    st.t_h = std::move(hn);
    st.t_c = std::move(cn);
  }
  Var s = add(reshape(q, {Fb, 1, C}), t_proj_(Var({Fb, 1, cfg_.ftlstm_hidden}, st.t_h)));
  Var z = permute(reshape(s, {1, Fb, 1, C}), {0, 3, 2, 1});  // [1,C,1,Fb]

  // pitch head
  const std::vector<double> m = mean_axis(z, 3).value();
  std::vector<double> ctx(C);
  for (int c = 0; c < C; ++c) {
    st.ctx_sum[c] += m[c];
    ctx[c] = st.ctx_sum[c] / static_cast<double>(t + 1);
  }
  Var mod = film_(Var({1, 1, C}, std::move(ctx)));
  Var gamma = add_scalar(slice(mod, 2, 0, Fb), 1.0);
  Var beta = slice(mod, 2, Fb, Fb);
  const Var fz = film(z, gamma, beta);
  gru_step(f0_gru_, fz.data(), st.f0_h);
  Frame out;
  out.f0 = sigmoid(f0_out_(Var({1, cfg_.f0_head_hidden}, st.f0_h))).item();

  std::vector<double> d = z.value();
  for (int i = 3; i >= 0; --i) {
    d.insert(d.end(), skips[i].begin(), skips[i].end());
    auto& h = st.dec[i];
    std::copy(d.begin(), d.end(), h.slot(t));
    const auto& g = dec_[i].g;
    const int w = h.width, wo = g.out_w(w);
    auto row = [&](int c, int ti) -> const double* {
      if (ti < 0) return nullptr;
      return h.slot(ti) + static_cast<std::size_t>(c) * w;
    };
    std::vector<double> xcol(static_cast<std::size_t>(g.cin) * g.kh * w), zbuf(static_cast<std::size_t>(g.cout) * g.kw * w);
    std::vector<double> y(static_cast<std::size_t>(g.cout) * wo);
    K::conv_transpose_row(g, w, static_cast<int>(t), row, dec_[i].weight.data(), dec_[i].bias.data(), xcol.data(),
                          zbuf.data(), y.data(), static_cast<std::size_t>(wo));
    d = i > 0 ? glu_frame(std::move(y), g.cout, wo) : std::move(y);
  }

  out.spectrum.assign(2 * spectral::kBins, 0.0);
  for (int f = 0; f < W0; ++f) {
    out.spectrum[2 * f] = d[f];
    out.spectrum[2 * f + 1] = d[W0 + f];
  }

  // high path
  {
    double* slot = st.high.slot(t);
    for (int f = 0; f < spectral::kHighBins; ++f)
      for (int c = 0; c < 2; ++c) slot[c * spectral::kHighBins + f] = frame[2 * (spectral::kWideBins + f) + c];
    const int Ch = cfg_.highband_channels;
    Var h = elu(Var({1, Ch, 1, 1}, conv_step(high_conv_, st.high, t)));
    h = high_bn_(h, false);
    gru_step(high_gru_, h.data(), st.high_h);
    const Var o = high_out_(Var({1, cfg_.highband_gru_hidden}, st.high_h));
    std::copy(o.value().begin(), o.value().end(), out.spectrum.begin() + 2 * spectral::kWideBins);
  }

  st.lost_run_ = loss_flag ? st.lost_run_ + 1 : 0;
  ++st.t_;
  return out;
}

}  // namespace bsplc
