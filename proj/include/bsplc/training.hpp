#pragma once

// Adversarial multi-task training: batch synthesis from clean speech, one
// discriminator update then one generator update per step, CSV logging,
// checkpoints and validation.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "bsplc/config.hpp"
#include "bsplc/discriminators.hpp"
#include "bsplc/generator.hpp"
#include "bsplc/loss_channel.hpp"
#include "bsplc/losses.hpp"

namespace bsplc {

struct TrainingConfig {
  GeneratorConfig generator;
  LossWeights weights;
  PlcpaWeights plcpa;
  MpdConfig mpd;
  MfdConfig mfd;
  MetricDConfig metric;

  // Gilbert-Elliott parameters drawn uniformly per utterance
  double p_gb_min = 0.02, p_gb_max = 0.2;
  double p_bg_min = 0.3, p_bg_max = 0.9;
  double loss_good = 0.0, loss_bad = 1.0;
  double max_loss_rate = 0.5;

  int batch_size = 4;
  double segment_seconds = 2.0;
  double g_lr = 2e-4, d_lr = 2e-4;
  double adam_beta1 = 0.8, adam_beta2 = 0.99;
  double grad_clip = 5.0;
  long total_steps = 1000;
  std::uint64_t seed = 0;
  long checkpoint_every = 100;
  long validate_every = 100;
  bool loss_region_mask = false;
  bool splice_in_training = false;

  // data: "synthetic" or a directory of 48 kHz mono WAV files
  std::string corpus = "synthetic";
  int synthetic_clips = 20;
  double synthetic_seconds = 1.0;
  double valid_fraction = 0.1;
  std::string output_dir = "run";

  void validate() const;
  int segment_samples() const;
  /// Every field as `key = value`, parseable by from_file.
  std::string describe() const;
  static TrainingConfig from(const ConfigFile& file);
  static TrainingConfig from_file(const std::filesystem::path& path);
};

/// Clean clips plus their normalised frame-level pitch targets.
struct Dataset {
  std::vector<Waveform> clips;
  std::vector<std::vector<double>> f0;  // normalised, one value per 10 ms frame of the clip
  std::vector<std::string> names;

  std::size_t size() const { return clips.size(); }
  static Dataset from_clips(std::vector<Waveform> clips);
  /// Loads every entry of the split; f0 tracks use the on-disk cache.
  static Dataset from_manifest(const CorpusManifest& manifest, Split split);
};

/// Train and validation sets as described by the configuration.
std::pair<Dataset, Dataset> load_datasets(const TrainingConfig& cfg);

struct TrainBatch {
  int batch = 0, frames = 0, samples = 0;  // samples = segment length
  std::vector<double> wide, high;          // lossy compressed input [B,T,161,2], [B,T,320,2]
  std::vector<double> ref;                 // clean compressed spectrum [B,T,481,2]
  std::vector<double> clean;               // clean segments [B,samples]
  std::vector<double> flags;               // per frame, 1 = lost
  std::vector<double> f0;                  // normalised targets [B,T]
  std::vector<LossTrace> traces;
};

/// Per-utterance channel: p_gb and p_bg uniform in their ranges, redrawn
/// while the expected loss rate exceeds cfg.max_loss_rate.
GEParams draw_channel_params(const TrainingConfig& cfg, Rng& rng);

/// Deterministic in (cfg.seed, step).
TrainBatch make_batch(const Dataset& data, const TrainingConfig& cfg, long step);

/// Adam with decoupled moment buffers per parameter.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<std::pair<std::string, ad::Var>> params, double lr, double beta1, double beta2, double eps = 1e-8);
  void step();
  long steps() const { return t_; }
  double lr = 0.0;

 private:
  friend struct TrainState;
  std::vector<std::pair<std::string, ad::Var>> params_;
  std::vector<std::vector<double>> m_, v_;
  double b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

/// Scales gradients so their global L2 norm is at most max_norm; returns the
/// norm before scaling.
double clip_grad_norm(const std::vector<ad::Var>& params, double max_norm);

struct TrainState {
  TrainingConfig cfg;
  Generator gen;
  MultiPeriodDiscriminator mpd;
  MultiFrequencyDiscriminator mfd;
  MetricDiscriminator metric;
  Adam opt_g, opt_d;
  long step = 0;

  explicit TrainState(const TrainingConfig& config);
  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;

  std::vector<ad::Var> d_params() const;
  void save(const std::filesystem::path& path) const;
  /// Restores a state written by save(); the configuration is read from the file.
  static std::unique_ptr<TrainState> load(const std::filesystem::path& path);
};

/// Generator-side objective on a batch: the weighted total as a
/// differentiable scalar, with every addend written to `report`.
ad::Var generator_objective(TrainState& st, const TrainBatch& batch, LossReport& report);

/// One discriminator update followed by one generator update.
LossReport train_step(TrainState& st, const TrainBatch& batch);

/// Conceals each validation clip under a seeded trace and reports
/// plcpa/mae/si_sdr overall and over lost regions.
std::map<std::string, double> validate(const TrainState& st, const Dataset& valid);

/// Full loop with CSV logging, periodic checkpoints and validation. Resumes
/// from `resume` when non-empty.
void run_training(const TrainingConfig& cfg, const std::filesystem::path& resume, std::ostream& log);

inline constexpr const char* kLossCsvHeader = "step,plcpa,mae,f0,linguistic,gan_g,metric_g,total";

}  // namespace bsplc
