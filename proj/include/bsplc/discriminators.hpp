#pragma once

// Adversarial critics: waveform folded by period (MPD), multi-resolution
// magnitude spectrograms (MFD), and a metric regressor in the MetricGAN style.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bsplc/audio_io.hpp"
#include "bsplc/layers.hpp"

namespace bsplc {

struct MpdConfig {
  std::vector<int> periods{2, 3, 5, 7, 11};
  std::vector<int> channels{8, 16, 32, 32};  // the four strided layers
  void validate() const;
};

struct MfdConfig {
  std::vector<int> window_lengths{240, 480, 960, 1920};  // hop = window / 4
  std::vector<int> channels{8, 16, 16, 16};
  void validate() const;
};

struct MetricDConfig {
  std::vector<int> channels{8, 16, 16};
  int hidden = 16;
  double compression = 0.3;
  void validate() const;
};

struct DiscriminatorOutput {
  std::vector<ad::Var> score_maps;
  std::vector<std::vector<ad::Var>> feature_maps;
};

class MultiPeriodDiscriminator {
 public:
  MultiPeriodDiscriminator(const MpdConfig& cfg, std::uint64_t seed);
  /// wave [B,N], N >= max period.
  DiscriminatorOutput forward(const ad::Var& wave) const;
  const MpdConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  /// Zeroes the output-head weights (bias kept), used by structural tests.
  void zero_heads();

  /// Folded plane shape (rows, period) for an input of `length` samples.
  static std::pair<int, int> fold_shape(int length, int period);

 private:
  struct Branch {
    int period = 0;
    std::vector<nn::Conv2d> convs;
    nn::Conv2d head;
  };
  MpdConfig cfg_;
  nn::ParamSet params_;
  std::vector<Branch> branches_;
};

class MultiFrequencyDiscriminator {
 public:
  MultiFrequencyDiscriminator(const MfdConfig& cfg, std::uint64_t seed);
  /// wave [B,N], N >= largest window.
  DiscriminatorOutput forward(const ad::Var& wave) const;
  const MfdConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  void zero_heads();

 private:
  struct Branch {
    int window = 0;
    std::vector<double> hann;
    std::vector<nn::Conv2d> convs;
    nn::Conv2d head;
  };
  MfdConfig cfg_;
  nn::ParamSet params_;
  std::vector<Branch> branches_;
};

class MetricDiscriminator {
 public:
  MetricDiscriminator(const MetricDConfig& cfg, std::uint64_t seed);
  /// Magnitudes [B,T,481] (linear scale) -> predicted metric [B] in [0,1].
  ad::Var forward(const ad::Var& enhanced_mag, const ad::Var& clean_mag) const;
  const MetricDConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

 private:
  MetricDConfig cfg_;
  nn::ParamSet params_;
  std::vector<nn::Conv2d> convs_;
  nn::Linear fc1_, fc2_;
};

/// Metric provider: two equal-length waveforms -> score in [0,1].
using MetricProvider = std::function<double(const Waveform& enhanced, const Waveform& clean)>;

/// clamp((SI-SDR + 10) / 30, 0, 1). Throws std::invalid_argument on a
/// zero-energy reference or unequal lengths.
double target_metric_q(const Waveform& enhanced, const Waveform& clean);
double target_metric_q(std::span<const double> enhanced, std::span<const double> clean);

}  // namespace bsplc
