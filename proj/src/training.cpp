#include "bsplc/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "bsplc/checkpoint.hpp"
#include "bsplc/f0.hpp"
#include "bsplc/inference.hpp"
#include "bsplc/metrics.hpp"
#include "bsplc/synthetic.hpp"

namespace bsplc {

using ad::Var;

namespace {

// Shortest decimal form that parses back to the same double.
std::string fmt(double v) {
  char buf[40];
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("training config: " + what);
}

std::vector<std::pair<std::string, Var>> named_trainable(const nn::ParamSet& ps, const std::string& prefix) {
  std::vector<std::pair<std::string, Var>> out;
  for (const auto& e : ps.entries())
    if (e.trainable) out.emplace_back(prefix + e.name, e.var);
  return out;
}

std::vector<Var> vars_of(const std::vector<std::pair<std::string, Var>>& named) {
  std::vector<Var> out;
  out.reserve(named.size());
  for (const auto& [n, v] : named) out.push_back(v);
  return out;
}

std::vector<std::pair<std::string, Var>> d_named(const TrainState& st) {
  auto out = named_trainable(st.mpd.params(), "mpd/");
  for (auto& p : named_trainable(st.mfd.params(), "mfd/")) out.push_back(std::move(p));
  for (auto& p : named_trainable(st.metric.params(), "metric/")) out.push_back(std::move(p));
  return out;
}

// Metric target with a guard for silent references, which SI-SDR cannot score.
double metric_target(std::span<const double> est, std::span<const double> clean) {
  double e = 0.0;
  for (double v : clean) e += v * v;
  if (e == 0.0) {
    for (double v : est)
      if (v != 0.0) return 0.0;
    return 1.0;
  }
  return target_metric_q(est, clean);
}

std::vector<Var> all_scores(const DiscriminatorOutput& a, const DiscriminatorOutput& b) {
  std::vector<Var> out = a.score_maps;
  out.insert(out.end(), b.score_maps.begin(), b.score_maps.end());
  return out;
}

// Everything the losses need from one generator pass.
struct GeneratorPass {
  Generator::Batch out;
  Var est;       // [B,samples] estimated clean segment
  Var est_mag;   // [B,T,481]
  Var clean;     // [B,samples]
  Var clean_mag;
};

GeneratorPass run_generator(const TrainState& st, const TrainBatch& b) {
  const int B = b.batch, T = b.frames;
  const spectral::StftConfig sc;
  const double p = sc.compression;
  GeneratorPass g;
  const Var wide({B, T, spectral::kWideBins, 2}, b.wide);
  const Var high({B, T, spectral::kHighBins, 2}, b.high);
  g.out = st.gen.forward(wide, high, b.flags, true);
  const Var lin = ops::decompress(g.out.full, p);
  const auto window = spectral::sqrt_hann(sc.win_length);
  const Var wave = ops::istft(lin, window, sc.hop, sc.hop, b.samples + sc.hop);
  g.est = ops::slice(wave, 1, 0, b.samples);
  g.est_mag = ops::complex_abs(lin, 1e-12);
  g.clean = Var({B, b.samples}, b.clean);
  {
    ad::NoGradGuard ng;
    g.clean_mag = ops::complex_abs(ops::decompress(Var({B, T, spectral::kBins, 2}, b.ref), p), 1e-12);
  }
  return g;
}

std::vector<double> frame_weights(const TrainBatch& b) { return b.flags; }

std::vector<double> sample_weights(const TrainBatch& b) {
  std::vector<double> w(static_cast<std::size_t>(b.batch) * b.samples, 0.0);
  for (int i = 0; i < b.batch; ++i) {
    const auto& tr = b.traces[i];
    for (int s = 0; s < b.samples; ++s)
      if (tr.lost[std::min<std::size_t>(s / kPacketSamples, tr.size() - 1)]) w[static_cast<std::size_t>(i) * b.samples + s] = 1.0;
  }
  return w;
}

// Lost packets of the estimate spliced into the clean signal, so the
// linguistic term only sees generated content where it was needed.
Var spliced_estimate(const GeneratorPass& g, const TrainBatch& b) {
  const auto w = sample_weights(b);
  std::vector<double> keep(w.size());
  std::vector<double> clean_part(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    keep[i] = w[i];
    clean_part[i] = (1.0 - w[i]) * b.clean[i];
  }
  const Var mask(g.est.shape(), keep);
  return ops::add(ops::mul(g.est, mask), Var(g.est.shape(), clean_part));
}

Var generator_loss(TrainState& st, const TrainBatch& b, const GeneratorPass& g, LossReport& report) {
  const TrainingConfig& cfg = st.cfg;
  const bool masked = cfg.loss_region_mask;
  const Var ref({b.batch, b.frames, spectral::kBins, 2}, b.ref);

  std::vector<double> fw, sw;
  if (masked) {
    fw = frame_weights(b);
    sw = sample_weights(b);
    // a batch without any loss has nothing to weight; fall back to uniform
    if (std::all_of(fw.begin(), fw.end(), [](double v) { return v == 0.0; })) fw.clear();
    if (std::all_of(sw.begin(), sw.end(), [](double v) { return v == 0.0; })) sw.clear();
  }
  const Var plcpa = losses::plcpa(g.out.full, ref, cfg.plcpa, fw);
  const Var mae = losses::mae(g.est, g.clean, sw);
  const Var f0 = losses::mae(g.out.f0, Var({b.batch, b.frames}, b.f0));
  const Var ling = losses::linguistic(cfg.splice_in_training ? spliced_estimate(g, b) : g.est, g.clean);

  Var gan_g, metric_g;
  auto adversarial = [&](const Var& est, const Var& est_mag) {
    const auto mp = st.mpd.forward(est);
    const auto mf = st.mfd.forward(est);
    gan_g = losses::lsgan_g(all_scores(mp, mf));
    metric_g = losses::metricgan_g(st.metric.forward(est_mag, g.clean_mag));
  };
  if (cfg.weights.adv_weight > 0.0) {
    adversarial(g.est, g.est_mag);
  } else {
    // reported only; no gradient path into the critics
    ad::NoGradGuard ng;
    adversarial(g.est.detach(), g.est_mag.detach());
  }

  LossReport terms;
  terms.plcpa = plcpa.item();
  terms.mae = mae.item();
  terms.f0 = f0.item();
  terms.linguistic = ling.item();
  terms.gan_g = gan_g.item();
  terms.metric_g = metric_g.item();
  report = combine(terms, cfg.weights);

  Var total = ops::add(plcpa, mae);
  total = ops::add(total, ops::scale(f0, cfg.weights.alpha));
  total = ops::add(total, ops::scale(ling, cfg.weights.beta));
  if (cfg.weights.adv_weight > 0.0) total = ops::add(total, ops::scale(ops::add(gan_g, metric_g), cfg.weights.adv_weight));
  return total;
}

void discriminator_step(TrainState& st, const TrainBatch& b, const GeneratorPass& g) {
  const Var est = g.est.detach();
  const Var est_mag = g.est_mag.detach();
  std::vector<double> q(b.batch);
  for (int i = 0; i < b.batch; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * b.samples;
    q[i] = metric_target(std::span<const double>(est.value()).subspan(off, b.samples),
                         std::span<const double>(b.clean).subspan(off, b.samples));
  }
  const Var real_mpd_in = g.clean;
  const auto rp = st.mpd.forward(real_mpd_in), fp = st.mpd.forward(est);
  const auto rf = st.mfd.forward(real_mpd_in), ff = st.mfd.forward(est);
  const Var gan_d = losses::lsgan_d(all_scores(rp, rf), all_scores(fp, ff));
  const Var met_d = losses::metricgan_d(st.metric.forward(g.clean_mag, g.clean_mag),
                                        st.metric.forward(est_mag, g.clean_mag), q);
  const Var d_total = ops::add(gan_d, met_d);
  if (!std::isfinite(d_total.item())) throw LossError("non-finite discriminator loss");
  const auto params = st.d_params();
  for (auto& v : params) v.node()->grad.clear();
  ad::backward(d_total);
  clip_grad_norm(params, st.cfg.grad_clip);
  st.opt_d.step();
  for (auto& v : params) v.node()->grad.clear();
}

}  // namespace

// --- configuration ------------------------------------------------------------

void TrainingConfig::validate() const {
  generator.validate();
  weights.validate();
  mpd.validate();
  mfd.validate();
  metric.validate();
  require(plcpa.amplitude >= 0.0 && plcpa.phase >= 0.0, "plcpa weights must be >= 0");
  auto prob = [](double v) { return v >= 0.0 && v <= 1.0; };
  require(prob(p_gb_min) && prob(p_gb_max) && p_gb_min <= p_gb_max, "need 0 <= p_gb_min <= p_gb_max <= 1");
  require(prob(p_bg_min) && prob(p_bg_max) && p_bg_min <= p_bg_max, "need 0 <= p_bg_min <= p_bg_max <= 1");
  require(p_gb_max + p_bg_min > 0.0, "transition probabilities cannot both be zero");
  require(prob(loss_good) && prob(loss_bad), "loss probabilities must lie in [0, 1]");
  require(max_loss_rate > 0.0 && max_loss_rate <= 0.5, "max_loss_rate must lie in (0, 0.5]");
  GEParams lo;
  lo.p_gb = p_gb_max;
  lo.p_bg = p_bg_min;
  lo.loss_good = loss_good;
  lo.loss_bad = loss_bad;
  require(expected_loss_rate(lo) <= max_loss_rate + 1e-12,
          "channel ranges allow an expected loss rate of " + fmt(expected_loss_rate(lo)) + " > max_loss_rate " +
              fmt(max_loss_rate));
  require(batch_size >= 1, "batch_size must be >= 1");
  require(segment_seconds > 0.0, "segment_seconds must be > 0");
  const double samples = segment_seconds * kSampleRate;
  require(std::abs(samples - std::round(samples)) < 1e-6 && std::lround(samples) % kPacketSamples == 0,
          "segment_seconds must be a whole number of 20 ms packets");
  require(g_lr > 0.0 && d_lr > 0.0, "learning rates must be > 0");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0, "Adam betas must lie in [0, 1)");
  require(grad_clip > 0.0, "grad_clip must be > 0");
  require(total_steps >= 0, "total_steps must be >= 0");
  require(checkpoint_every >= 1 && validate_every >= 1, "checkpoint_every and validate_every must be >= 1");
  require(valid_fraction >= 0.0 && valid_fraction < 1.0, "valid_fraction must lie in [0, 1)");
  if (corpus == "synthetic") {
    require(synthetic_clips >= 1, "synthetic_clips must be >= 1");
    require(synthetic_seconds > 0.0, "synthetic_seconds must be > 0");
  }
  require(!output_dir.empty(), "output_dir must not be empty");
}

int TrainingConfig::segment_samples() const { return static_cast<int>(std::lround(segment_seconds * kSampleRate)); }

std::string TrainingConfig::describe() const {
  std::ostringstream os;
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << generator.describe();
  os << "alpha = " << fmt(weights.alpha) << "\n"
     << "beta = " << fmt(weights.beta) << "\n"
     << "adv_weight = " << fmt(weights.adv_weight) << "\n"
     << "plcpa_amplitude_weight = " << fmt(plcpa.amplitude) << "\n"
     << "plcpa_phase_weight = " << fmt(plcpa.phase) << "\n"
     << "mpd_periods = " << join(mpd.periods) << "\n"
     << "mpd_channels = " << join(mpd.channels) << "\n"
     << "mfd_windows = " << join(mfd.window_lengths) << "\n"
     << "mfd_channels = " << join(mfd.channels) << "\n"
     << "metric_channels = " << join(metric.channels) << "\n"
     << "metric_hidden = " << metric.hidden << "\n"
     << "p_gb_min = " << fmt(p_gb_min) << "\n"
     << "p_gb_max = " << fmt(p_gb_max) << "\n"
     << "p_bg_min = " << fmt(p_bg_min) << "\n"
     << "p_bg_max = " << fmt(p_bg_max) << "\n"
     << "loss_good = " << fmt(loss_good) << "\n"
     << "loss_bad = " << fmt(loss_bad) << "\n"
     << "max_loss_rate = " << fmt(max_loss_rate) << "\n"
     << "batch_size = " << batch_size << "\n"
     << "segment_seconds = " << fmt(segment_seconds) << "\n"
     << "g_lr = " << fmt(g_lr) << "\n"
     << "d_lr = " << fmt(d_lr) << "\n"
     << "adam_beta1 = " << fmt(adam_beta1) << "\n"
     << "adam_beta2 = " << fmt(adam_beta2) << "\n"
     << "grad_clip = " << fmt(grad_clip) << "\n"
     << "total_steps = " << total_steps << "\n"
     << "seed = " << seed << "\n"
     << "checkpoint_every = " << checkpoint_every << "\n"
     << "validate_every = " << validate_every << "\n"
     << "loss_region_mask = " << b(loss_region_mask) << "\n"
     << "splice_in_training = " << b(splice_in_training) << "\n"
     << "corpus = " << corpus << "\n"
     << "synthetic_clips = " << synthetic_clips << "\n"
     << "synthetic_seconds = " << fmt(synthetic_seconds) << "\n"
     << "valid_fraction = " << fmt(valid_fraction) << "\n"
     << "output_dir = " << output_dir << "\n";
  return os.str();
}

TrainingConfig TrainingConfig::from(const ConfigFile& f) {
  TrainingConfig c;
  c.generator = generator_config_from(f);
  c.weights.alpha = f.get_double("alpha", c.weights.alpha);
  c.weights.beta = f.get_double("beta", c.weights.beta);
  c.weights.adv_weight = f.get_double("adv_weight", c.weights.adv_weight);
  c.plcpa.amplitude = f.get_double("plcpa_amplitude_weight", c.plcpa.amplitude);
  c.plcpa.phase = f.get_double("plcpa_phase_weight", c.plcpa.phase);
  c.mpd.periods = f.get_int_list("mpd_periods", c.mpd.periods);
  c.mpd.channels = f.get_int_list("mpd_channels", c.mpd.channels);
  c.mfd.window_lengths = f.get_int_list("mfd_windows", c.mfd.window_lengths);
  c.mfd.channels = f.get_int_list("mfd_channels", c.mfd.channels);
  c.metric.channels = f.get_int_list("metric_channels", c.metric.channels);
  c.metric.hidden = static_cast<int>(f.get_int("metric_hidden", c.metric.hidden));
  c.p_gb_min = f.get_double("p_gb_min", c.p_gb_min);
  c.p_gb_max = f.get_double("p_gb_max", c.p_gb_max);
  c.p_bg_min = f.get_double("p_bg_min", c.p_bg_min);
  c.p_bg_max = f.get_double("p_bg_max", c.p_bg_max);
  c.loss_good = f.get_double("loss_good", c.loss_good);
  c.loss_bad = f.get_double("loss_bad", c.loss_bad);
  c.max_loss_rate = f.get_double("max_loss_rate", c.max_loss_rate);
  c.batch_size = static_cast<int>(f.get_int("batch_size", c.batch_size));
  c.segment_seconds = f.get_double("segment_seconds", c.segment_seconds);
  c.g_lr = f.get_double("g_lr", c.g_lr);
  c.d_lr = f.get_double("d_lr", c.d_lr);
  c.adam_beta1 = f.get_double("adam_beta1", c.adam_beta1);
  c.adam_beta2 = f.get_double("adam_beta2", c.adam_beta2);
  c.grad_clip = f.get_double("grad_clip", c.grad_clip);
  c.total_steps = static_cast<long>(f.get_int("total_steps", c.total_steps));
  const long long seed = f.get_int("seed", static_cast<long long>(c.seed));
  if (seed < 0) throw ConfigError(f.source() + ": seed must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);
  c.checkpoint_every = static_cast<long>(f.get_int("checkpoint_every", c.checkpoint_every));
  c.validate_every = static_cast<long>(f.get_int("validate_every", c.validate_every));
  c.loss_region_mask = f.get_bool("loss_region_mask", c.loss_region_mask);
  c.splice_in_training = f.get_bool("splice_in_training", c.splice_in_training);
  c.corpus = f.get_string("corpus", c.corpus);
  c.synthetic_clips = static_cast<int>(f.get_int("synthetic_clips", c.synthetic_clips));
  c.synthetic_seconds = f.get_double("synthetic_seconds", c.synthetic_seconds);
  c.valid_fraction = f.get_double("valid_fraction", c.valid_fraction);
  c.output_dir = f.get_string("output_dir", c.output_dir);
  f.reject_unused();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(f.source() + ": " + e.what());
  }
  return c;
}

TrainingConfig TrainingConfig::from_file(const std::filesystem::path& path) { return from(ConfigFile::load(path)); }

// --- data ---------------------------------------------------------------------

Dataset Dataset::from_clips(std::vector<Waveform> clips) {
  Dataset d;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    d.f0.push_back(normalize_f0(extract_f0(clips[i])));
    d.names.push_back("clip" + std::to_string(i));
  }
  d.clips = std::move(clips);
  return d;
}

Dataset Dataset::from_manifest(const CorpusManifest& manifest, Split split) {
  Dataset d;
  for (const auto& e : manifest.subset(split)) {
    Waveform w = read_wav(e.path);
    d.f0.push_back(normalize_f0(cached_f0(e.path, w)));
    d.names.push_back(e.path);
    d.clips.push_back(std::move(w));
  }
  return d;
}

std::pair<Dataset, Dataset> load_datasets(const TrainingConfig& cfg) {
  if (cfg.corpus == "synthetic") {
    const int n_valid = std::max(1, static_cast<int>(std::lround(cfg.synthetic_clips * cfg.valid_fraction)));
    return {Dataset::from_clips(synthetic_corpus(cfg.synthetic_clips, cfg.synthetic_seconds, derive_seed(cfg.seed, 1))),
            Dataset::from_clips(synthetic_corpus(n_valid, cfg.synthetic_seconds, derive_seed(cfg.seed, 2)))};
  }
  const auto manifest = build_manifest(cfg.corpus, cfg.segment_seconds, cfg.valid_fraction, cfg.seed);
  Dataset train = Dataset::from_manifest(manifest, Split::kTrain);
  if (train.size() == 0)
    throw std::runtime_error("corpus " + cfg.corpus + " has no training clips of at least " + fmt(cfg.segment_seconds) +
                             " s");
  return {std::move(train), Dataset::from_manifest(manifest, Split::kValid)};
}

GEParams draw_channel_params(const TrainingConfig& cfg, Rng& rng) {
  GEParams ge;
  ge.loss_good = cfg.loss_good;
  ge.loss_bad = cfg.loss_bad;
  for (int attempt = 0; attempt < 100; ++attempt) {
    ge.p_gb = rng.uniform(cfg.p_gb_min, cfg.p_gb_max);
    ge.p_bg = rng.uniform(cfg.p_bg_min, cfg.p_bg_max);
    if (ge.p_gb + ge.p_bg > 0.0 && expected_loss_rate(ge) <= cfg.max_loss_rate) return ge;
  }
  // the corner with the lowest loss rate always satisfies a validated config
  ge.p_gb = cfg.p_gb_min;
  ge.p_bg = cfg.p_bg_max;
  return ge;
}

TrainBatch make_batch(const Dataset& data, const TrainingConfig& cfg, long step) {
  if (data.size() == 0) throw std::invalid_argument("make_batch: empty dataset");
  const spectral::StftConfig sc;
  TrainBatch b;
  b.batch = cfg.batch_size;
  b.samples = cfg.segment_samples();
  const int padded_len = b.samples + sc.hop;
  b.frames = spectral::num_frames(padded_len, sc);
  const int T = b.frames;
  const std::size_t packets = packets_for(b.samples);

  for (int i = 0; i < b.batch; ++i) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(i)));
    const std::size_t idx = rng.index(data.size());
    const auto& clip = data.clips[idx].samples;
    // offsets on the hop grid keep the pitch targets frame-aligned
    std::size_t first_frame = 0;
    if (clip.size() > static_cast<std::size_t>(b.samples))
      first_frame = rng.index((clip.size() - b.samples) / sc.hop + 1);
    Waveform seg;
    seg.samples.assign(b.samples, 0.0);
    const std::size_t start = first_frame * sc.hop;
    for (int s = 0; s < b.samples && start + s < clip.size(); ++s) seg.samples[s] = clip[start + s];

    GEParams ge = draw_channel_params(cfg, rng);
    ge.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(step), 1000 + static_cast<std::uint64_t>(i));
    LossTrace tr = sample_trace(ge, packets, cfg.max_loss_rate);
    const Waveform lossy = apply_trace(seg, tr);

    std::vector<double> pad(lossy.samples);
    pad.resize(padded_len, 0.0);
    const auto comp = spectral::compress(spectral::stft(std::span<const double>(pad), sc), sc.compression);
    const auto bands = spectral::band_split(comp);
    b.wide.insert(b.wide.end(), bands.wide.begin(), bands.wide.end());
    b.high.insert(b.high.end(), bands.high.begin(), bands.high.end());

    pad = seg.samples;
    pad.resize(padded_len, 0.0);
    const auto ref = spectral::compress(spectral::stft(std::span<const double>(pad), sc), sc.compression);
    b.ref.insert(b.ref.end(), ref.data.begin(), ref.data.end());
    b.clean.insert(b.clean.end(), seg.samples.begin(), seg.samples.end());

    const auto flags = frame_loss_flags(tr, T);
    for (int t = 0; t < T; ++t) b.flags.push_back(flags[t] ? 1.0 : 0.0);
    const auto& track = data.f0[idx];
    for (int t = 0; t < T; ++t) {
      const std::size_t k = first_frame + t;
      b.f0.push_back(k < track.size() ? track[k] : 0.0);
    }
    b.traces.push_back(std::move(tr));
  }
  return b;
}

// --- optimisation -------------------------------------------------------------

Adam::Adam(std::vector<std::pair<std::string, Var>> params, double learning_rate, double beta1, double beta2, double eps)
    : lr(learning_rate), params_(std::move(params)), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto& [n, v] : params_) {
    m_.emplace_back(v.numel(), 0.0);
    v_.emplace_back(v.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    ad::Node* node = params_[k].second.node();
    if (node->grad.empty()) continue;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < node->value.size(); ++i) {
      const double g = node->grad[i];
      m[i] = b1_ * m[i] + (1.0 - b1_) * g;
      v[i] = b2_ * v[i] + (1.0 - b2_) * g * g;
      node->value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double clip_grad_norm(const std::vector<Var>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && std::isfinite(norm)) {
    const double s = max_norm / (norm + 1e-6);
    for (const auto& p : params)
      for (double& g : p.node()->grad) g *= s;
  }
  return norm;
}

// --- state --------------------------------------------------------------------

TrainState::TrainState(const TrainingConfig& config)
    : cfg(config),
      gen(config.generator, derive_seed(config.seed, 10)),
      mpd(config.mpd, derive_seed(config.seed, 11)),
      mfd(config.mfd, derive_seed(config.seed, 12)),
      metric(config.metric, derive_seed(config.seed, 13)) {
  cfg.validate();
  opt_g = Adam(named_trainable(gen.params(), "gen/"), cfg.g_lr, cfg.adam_beta1, cfg.adam_beta2);
  opt_d = Adam(d_named(*this), cfg.d_lr, cfg.adam_beta1, cfg.adam_beta2);
}

std::vector<Var> TrainState::d_params() const { return vars_of(d_named(*this)); }

void TrainState::save(const std::filesystem::path& path) const {
  Checkpoint ck;
  ck.meta["kind"] = "training";
  ck.meta["generator_config"] = gen.config().describe();
  ck.meta["training_config"] = cfg.describe();
  ck.meta["step"] = std::to_string(step);
  ck.meta["adam_g_steps"] = std::to_string(opt_g.t_);
  ck.meta["adam_d_steps"] = std::to_string(opt_d.t_);
  ck.add_params(gen.params(), "gen/");
  ck.add_params(mpd.params(), "mpd/");
  ck.add_params(mfd.params(), "mfd/");
  ck.add_params(metric.params(), "metric/");
  auto moments = [&](const Adam& opt, const std::string& tag) {
    for (std::size_t k = 0; k < opt.params_.size(); ++k) {
      const auto& [name, v] = opt.params_[k];
      ck.tensors.push_back({tag + "/m/" + name, v.shape(), opt.m_[k]});
      ck.tensors.push_back({tag + "/v/" + name, v.shape(), opt.v_[k]});
    }
  };
  moments(opt_g, "adam_g");
  moments(opt_d, "adam_d");
  ck.save(path);
}

std::unique_ptr<TrainState> TrainState::load(const std::filesystem::path& path) {
  const Checkpoint ck = Checkpoint::load(path);
  auto meta = [&](const std::string& key) {
    const auto it = ck.meta.find(key);
    if (it == ck.meta.end()) throw CheckpointError(path.string() + ": not a training checkpoint (no " + key + ")");
    return it->second;
  };
  const TrainingConfig cfg = TrainingConfig::from(ConfigFile::parse(meta("training_config"), path.string() + " (config)"));
  auto st = std::make_unique<TrainState>(cfg);
  ck.restore_params(st->gen.params(), "gen/");
  ck.restore_params(st->mpd.params(), "mpd/");
  ck.restore_params(st->mfd.params(), "mfd/");
  ck.restore_params(st->metric.params(), "metric/");
  auto moments = [&](Adam& opt, const std::string& tag) {
    for (std::size_t k = 0; k < opt.params_.size(); ++k) {
      const std::string& name = opt.params_[k].first;
      const auto* m = ck.find(tag + "/m/" + name);
      const auto* v = ck.find(tag + "/v/" + name);
      if (!m || !v || m->values.size() != opt.m_[k].size() || v->values.size() != opt.v_[k].size())
        throw CheckpointError(path.string() + ": missing or mismatched optimiser state for " + name);
      opt.m_[k] = m->values;
      opt.v_[k] = v->values;
    }
  };
  moments(st->opt_g, "adam_g");
  moments(st->opt_d, "adam_d");
  st->step = std::stol(meta("step"));
  st->opt_g.t_ = std::stol(meta("adam_g_steps"));
  st->opt_d.t_ = std::stol(meta("adam_d_steps"));
  return st;
}

// --- steps --------------------------------------------------------------------

Var generator_objective(TrainState& st, const TrainBatch& batch, LossReport& report) {
  const GeneratorPass g = run_generator(st, batch);
  return generator_loss(st, batch, g, report);
}

LossReport train_step(TrainState& st, const TrainBatch& batch) {
  LossReport report;
  try {
    const GeneratorPass g = run_generator(st, batch);
    discriminator_step(st, batch, g);

    const auto gp = st.gen.params().trainable();
    for (auto& v : gp) v.node()->grad.clear();
    const Var total = generator_loss(st, batch, g, report);
    ad::backward(total);
    clip_grad_norm(gp, st.cfg.grad_clip);
    st.opt_g.step();
    st.gen.params().zero_grad();
    for (auto& v : st.d_params()) v.node()->grad.clear();
  } catch (const LossError& e) {
    throw LossError("step " + std::to_string(st.step) + ": " + e.what());
  }
  ++st.step;
  return report;
}

std::map<std::string, double> validate(const TrainState& st, const Dataset& valid) {
  if (valid.size() == 0) throw std::invalid_argument("validation set is empty");
  const spectral::StftConfig sc;
  double plcpa = 0, mae = 0, sdr = 0, lost_plcpa = 0, lost_mae = 0, lost_sdr = 0;
  int lost_clips = 0;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    const Waveform& clean = valid.clips[i];
    GEParams ge;
    ge.p_gb = 0.5 * (st.cfg.p_gb_min + st.cfg.p_gb_max);
    ge.p_bg = 0.5 * (st.cfg.p_bg_min + st.cfg.p_bg_max);
    ge.loss_good = st.cfg.loss_good;
    ge.loss_bad = st.cfg.loss_bad;
    ge.seed = derive_seed(st.cfg.seed, 0x76616c, i);
    const LossTrace tr = sample_trace(ge, packets_for(clean.samples.size()), st.cfg.max_loss_rate);
    const Waveform out = conceal(st.gen, apply_trace(clean, tr), &tr);

    const auto es = spectral::stft(out, sc), rs = spectral::stft(clean, sc);
    plcpa += plcpa_loss(es, rs, sc.compression, st.cfg.plcpa);
    mae += mae_time_loss(out, clean);
    sdr += metrics::si_sdr_capped(out.samples, clean.samples);

    std::vector<double> e_lost, r_lost;
    for (std::size_t s = 0; s < clean.samples.size(); ++s)
      if (tr.lost[s / kPacketSamples]) {
        e_lost.push_back(out.samples[s]);
        r_lost.push_back(clean.samples[s]);
      }
    double r_energy = 0.0;
    for (double v : r_lost) r_energy += v * v;
    if (r_lost.empty() || r_energy == 0.0) continue;
    // frames whose centre falls in a lost packet
    const auto flags = frame_loss_flags(tr, es.frames);
    spectral::ComplexSpectrogram el, rl;
    el.bins = rl.bins = es.bins;
    for (int t = 0; t < es.frames; ++t) {
      if (!flags[t]) continue;
      el.data.insert(el.data.end(), es.data.begin() + t * es.bins, es.data.begin() + (t + 1) * es.bins);
      rl.data.insert(rl.data.end(), rs.data.begin() + t * rs.bins, rs.data.begin() + (t + 1) * rs.bins);
      ++el.frames;
      ++rl.frames;
    }
    if (el.frames > 0) lost_plcpa += plcpa_loss(el, rl, sc.compression, st.cfg.plcpa);
    double m = 0.0;
    for (std::size_t k = 0; k < e_lost.size(); ++k) m += std::abs(e_lost[k] - r_lost[k]);
    lost_mae += m / static_cast<double>(e_lost.size());
    lost_sdr += metrics::si_sdr_capped(e_lost, r_lost);
    ++lost_clips;
  }
  const double n = static_cast<double>(valid.size());
  std::map<std::string, double> r{{"plcpa", plcpa / n}, {"mae", mae / n}, {"si_sdr", sdr / n}};
  if (lost_clips > 0) {
    r["lost_plcpa"] = lost_plcpa / lost_clips;
    r["lost_mae"] = lost_mae / lost_clips;
    r["lost_si_sdr"] = lost_sdr / lost_clips;
  }
  return r;
}

void run_training(const TrainingConfig& config, const std::filesystem::path& resume, std::ostream& log) {
  config.validate();
  std::unique_ptr<TrainState> st;
  if (resume.empty()) {
    st = std::make_unique<TrainState>(config);
  } else {
    st = TrainState::load(resume);
    // the schedule may be extended on resume; the model and data settings come from the checkpoint
    st->cfg.total_steps = config.total_steps;
    st->cfg.checkpoint_every = config.checkpoint_every;
    st->cfg.validate_every = config.validate_every;
    st->cfg.output_dir = config.output_dir;
    log << "resumed from " << resume.string() << " at step " << st->step << "\n";
  }
  const TrainingConfig& cfg = st->cfg;
  log << "# resolved configuration\n" << cfg.describe();

  auto [train, valid] = load_datasets(cfg);
  log << "train clips: " << train.size() << ", validation clips: " << valid.size() << "\n";
  if (valid.size() == 0) log << "no validation clips; validation is skipped\n";

  const std::filesystem::path dir = cfg.output_dir;
  std::filesystem::create_directories(dir);
  const auto csv_path = dir / "losses.csv";
  const bool append = !resume.empty() && std::filesystem::exists(csv_path);
  std::ofstream csv(csv_path, append ? std::ios::app : std::ios::trunc);
  if (!csv) throw std::ios_base::failure("cannot write " + csv_path.string());
  if (!append) csv << kLossCsvHeader << "\n";

  auto checkpoint = [&] {
    st->save(dir / "checkpoint.bin");
    save_generator(dir / "generator.bin", st->gen);
  };
  while (st->step < cfg.total_steps) {
    const long s = st->step;
    const TrainBatch batch = make_batch(train, cfg, s);
    const LossReport r = train_step(*st, batch);
    csv << s << "," << fmt(r.plcpa) << "," << fmt(r.mae) << "," << fmt(r.f0) << "," << fmt(r.linguistic) << ","
        << fmt(r.gan_g) << "," << fmt(r.metric_g) << "," << fmt(r.total) << "\n";
    csv.flush();
    if (st->step % 10 == 0 || st->step == cfg.total_steps)
      log << "step " << st->step << " total " << fmt(r.total) << " plcpa " << fmt(r.plcpa) << " mae " << fmt(r.mae)
          << "\n";
    if (st->step % cfg.checkpoint_every == 0) checkpoint();
    if (valid.size() > 0 && st->step % cfg.validate_every == 0) {
      log << "validation at step " << st->step << ":";
      for (const auto& [k, v] : validate(*st, valid)) log << " " << k << "=" << fmt(v);
      log << "\n";
    }
  }
  checkpoint();
  log << "finished at step " << st->step << "; checkpoints in " << dir.string() << "\n";
}

}  // namespace bsplc
