#pragma once

// Named parameter storage and the small layer set shared by the generator and
// the discriminators.

#include <cstdint>
#include <string>
#include <vector>

#include "bsplc/ops.hpp"
#include "bsplc/random.hpp"

namespace bsplc::nn {

using ad::Var;

struct ParamEntry {
  std::string name;
  Var var;
  bool trainable = true;  // false for running statistics
};

/// Ordered collection of named tensors. Registration order is the
/// initialisation order and the checkpoint order.
class ParamSet {
 public:
  /// Registers a zero-filled tensor.
  Var add(const std::string& name, ad::Shape shape, bool trainable = true);

  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::vector<Var> trainable() const;
  std::size_t count_trainable() const;
  const Var& get(const std::string& name) const;
  void zero_grad() const;
  /// Order-sensitive hash of every stored value, used for determinism checks.
  std::uint64_t checksum() const;

 private:
  std::vector<ParamEntry> entries_;
};

/// Fills with U(-bound, bound).
void init_uniform(Var& v, double bound, Rng& rng);

struct Conv2d {
  kernels::Conv2dGeometry g;
  Var weight, bias;

  Conv2d() = default;
  Conv2d(ParamSet& ps, const std::string& name, const kernels::Conv2dGeometry& geom, Rng& rng);
  Var operator()(const Var& x) const { return ops::conv2d(x, weight, bias, g); }
  std::size_t param_count() const { return g.weight_size() + g.cout; }
};

struct ConvTranspose {
  kernels::ConvTransposeGeometry g;
  Var weight, bias;

  ConvTranspose() = default;
  ConvTranspose(ParamSet& ps, const std::string& name, const kernels::ConvTransposeGeometry& geom, Rng& rng);
  Var operator()(const Var& x) const { return ops::conv_transpose(x, weight, bias, g); }
};

struct Linear {
  int in = 0, out = 0;
  Var weight, bias;

  Linear() = default;
  Linear(ParamSet& ps, const std::string& name, int in_features, int out_features, Rng& rng);
  Var operator()(const Var& x) const { return ops::linear(x, weight, bias); }
};

struct Lstm {
  int input = 0, hidden = 0;
  Var w_ih, w_hh, bias;

  Lstm() = default;
  Lstm(ParamSet& ps, const std::string& name, int input_size, int hidden_size, Rng& rng);
  Var operator()(const Var& x, bool reverse = false) const { return ops::lstm(x, w_ih, w_hh, bias, reverse); }
};

struct Gru {
  int input = 0, hidden = 0;
  Var w_ih, w_hh, b_ih, b_hh;

  Gru() = default;
  Gru(ParamSet& ps, const std::string& name, int input_size, int hidden_size, Rng& rng);
  Var operator()(const Var& x) const { return ops::gru(x, w_ih, w_hh, b_ih, b_hh); }
};

/// Batch normalisation over every axis except 1. Training mode normalises
/// with batch statistics and updates the running estimates.
struct BatchNorm {
  int channels = 0;
  double momentum = 0.1;
  double eps = 1e-5;
  Var gamma, beta, running_mean, running_var;

  BatchNorm() = default;
  BatchNorm(ParamSet& ps, const std::string& name, int num_channels);
  Var operator()(const Var& x, bool training) const;
};

}  // namespace bsplc::nn
