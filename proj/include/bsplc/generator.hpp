#pragma once

// Band-split concealment generator.
//
// Wide band (bins 0..160): gated conv encoder -> dilated causal conv stack ->
// frequency/time LSTM bottleneck -> gated transposed-conv decoder with skips,
// plus a pitch head fed from the bottleneck. High band (bins 161..480): one
// frequency-collapsing conv, ELU, batch norm, GRU and a linear projection.
//
// Every layer is causal in time. streaming_step() runs one frame at a time
// through the same row kernels as forward(), so the two agree to rounding.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bsplc/layers.hpp"
#include "bsplc/spectral.hpp"

namespace bsplc {

struct GeneratorConfig {
  std::string preset = "toy";
  std::array<int, 4> encoder_channels{8, 16, 24, 32};
  std::array<int, 4> freq_strides{2, 2, 2, 2};
  std::array<int, 4> tfdcm_dilations{1, 2, 4, 8};
  int ftlstm_hidden = 32;
  int highband_channels = 128;
  int highband_gru_hidden = 128;
  int f0_head_hidden = 32;
  bool include_loss_flag_input = true;

  static GeneratorConfig toy();
  static GeneratorConfig base();
  /// Named preset; throws std::invalid_argument for unknown names.
  static GeneratorConfig preset_named(const std::string& name);

  void validate() const;
  /// Frequency widths after each encoder stage, starting with the input (161).
  std::array<int, 5> widths() const;
  /// One `key = value` line per field.
  std::string describe() const;
  bool operator==(const GeneratorConfig&) const = default;
};

struct GeneratorOutput {
  spectral::RealSpectrogram full_band_compressed;  // T x 481 x 2
  std::vector<double> f0_pred;                     // T values in [0,1]
};

class Generator;

/// Per-stream causal state. reset() restores the all-zero initial state.
class GeneratorState {
 public:
  void reset();
  long frames_processed() const { return t_; }
  int lost_run() const { return lost_run_; }

  /// Ring buffer holding the last `depth` input frames of one causal layer.
  struct History {
    int channels = 0, width = 0, depth = 1;
    std::vector<double> buf;
    double* slot(long t) { return buf.data() + static_cast<std::size_t>(t % depth) * channels * width; }
  };

 private:
  friend class Generator;

  long t_ = 0;
  int lost_run_ = 0;
  std::vector<History> enc, tfd, dec;
  History high;
  std::vector<double> t_h, t_c;  // time LSTM, one row per bottleneck bin
  std::vector<double> ctx_sum;   // running sum of the pitch-head context
  std::vector<double> f0_h, high_h;
  std::string config_tag;
};

class Generator {
 public:
  Generator(const GeneratorConfig& cfg, std::uint64_t seed);
  // Copies would share parameter storage with the original.
  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;
  Generator(Generator&&) = default;
  Generator& operator=(Generator&&) = default;

  const GeneratorConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  std::size_t count_parameters() const { return params_.count_trainable(); }

  struct Batch {
    ad::Var full;  // [B,T,481,2]
    ad::Var f0;    // [B,T]
  };

  /// wide [B,T,161,2], high [B,T,320,2], flags B*T values (1 = frame lost).
  /// `training` selects batch statistics in the high-band normalisation.
  Batch forward(const ad::Var& wide, const ad::Var& high, const std::vector<double>& flags, bool training) const;

  /// Single-utterance inference in evaluation mode.
  GeneratorOutput forward(const spectral::CompressedBandPair& input, const std::vector<bool>& loss_flags) const;

  GeneratorState make_state() const;

  struct Frame {
    std::vector<double> spectrum;  // 481 x 2 compressed
    double f0 = 0.0;
  };
  /// Processes one 481x2 compressed frame. Evaluation mode.
  Frame streaming_step(GeneratorState& state, const double* frame, bool loss_flag) const;

 private:
  GeneratorConfig cfg_;
  nn::ParamSet params_;
  std::array<int, 5> widths_{};
  int in_channels_ = 3;

  std::array<nn::Conv2d, 4> enc_;
  std::array<nn::Conv2d, 4> tfd_dw_, tfd_pw_;
  nn::Lstm f_fwd_, f_bwd_, t_lstm_;
  nn::Linear f_proj_, t_proj_;
  nn::Linear film_;
  nn::Gru f0_gru_;
  nn::Linear f0_out_;
  std::array<nn::ConvTranspose, 4> dec_;
  nn::Conv2d high_conv_;
  nn::BatchNorm high_bn_;
  nn::Gru high_gru_;
  nn::Linear high_out_;
};

}  // namespace bsplc
