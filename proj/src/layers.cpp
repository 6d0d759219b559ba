#include "bsplc/layers.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace bsplc::nn {

Var ParamSet::add(const std::string& name, ad::Shape shape, bool trainable) {
  for (const auto& e : entries_)
    if (e.name == name) throw std::logic_error("duplicate parameter name " + name);
  Var v = Var::zeros(std::move(shape), trainable);
  entries_.push_back({name, v, trainable});
  return v;
}

std::vector<Var> ParamSet::trainable() const {
  std::vector<Var> out;
  for (const auto& e : entries_)
    if (e.trainable) out.push_back(e.var);
  return out;
}

std::size_t ParamSet::count_trainable() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.var.numel();
  return n;
}

const Var& ParamSet::get(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.var;
  throw std::out_of_range("no parameter named " + name);
}

void ParamSet::zero_grad() const {
  for (const auto& e : entries_) e.var.node()->grad.clear();
}

std::uint64_t ParamSet::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& e : entries_)
    for (double v : e.var.value()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = mix_seed(h ^ bits);
    }
  return h;
}

void init_uniform(Var& v, double bound, Rng& rng) {
  for (double& x : v.value_mut()) x = rng.uniform(-bound, bound);
}

Conv2d::Conv2d(ParamSet& ps, const std::string& name, const kernels::Conv2dGeometry& geom, Rng& rng) : g(geom) {
  if (g.cin < 1 || g.cout < 1 || g.groups < 1 || g.cin % g.groups || g.cout % g.groups)
    throw std::invalid_argument(name + ": invalid channel/group configuration");
  weight = ps.add(name + ".weight", {g.cout, g.cin / g.groups, g.kh, g.kw});
  bias = ps.add(name + ".bias", {g.cout});
  const double bound = 1.0 / std::sqrt(static_cast<double>(g.col_rows()));
  init_uniform(weight, bound, rng);
  init_uniform(bias, bound, rng);
}

ConvTranspose::ConvTranspose(ParamSet& ps, const std::string& name, const kernels::ConvTransposeGeometry& geom,
                             Rng& rng)
    : g(geom) {
  if (g.cin < 1 || g.cout < 1) throw std::invalid_argument(name + ": invalid channels");
  weight = ps.add(name + ".weight", {g.cout, g.kw, g.cin, g.kh});
  bias = ps.add(name + ".bias", {g.cout});
  const double bound = 1.0 / std::sqrt(static_cast<double>(g.cin * g.kh * g.kw) / g.sw);
  init_uniform(weight, bound, rng);
  init_uniform(bias, bound, rng);
}

Linear::Linear(ParamSet& ps, const std::string& name, int in_features, int out_features, Rng& rng)
    : in(in_features), out(out_features) {
  if (in < 1 || out < 1) throw std::invalid_argument(name + ": invalid dimensions");
  weight = ps.add(name + ".weight", {out, in});
  bias = ps.add(name + ".bias", {out});
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  init_uniform(weight, bound, rng);
  init_uniform(bias, bound, rng);
}

Lstm::Lstm(ParamSet& ps, const std::string& name, int input_size, int hidden_size, Rng& rng)
    : input(input_size), hidden(hidden_size) {
  if (input < 1 || hidden < 1) throw std::invalid_argument(name + ": invalid dimensions");
  w_ih = ps.add(name + ".w_ih", {4 * hidden, input});
  w_hh = ps.add(name + ".w_hh", {4 * hidden, hidden});
  bias = ps.add(name + ".bias", {4 * hidden});
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  init_uniform(w_ih, bound, rng);
  init_uniform(w_hh, bound, rng);
  init_uniform(bias, bound, rng);
}

Gru::Gru(ParamSet& ps, const std::string& name, int input_size, int hidden_size, Rng& rng)
    : input(input_size), hidden(hidden_size) {
  if (input < 1 || hidden < 1) throw std::invalid_argument(name + ": invalid dimensions");
  w_ih = ps.add(name + ".w_ih", {3 * hidden, input});
  w_hh = ps.add(name + ".w_hh", {3 * hidden, hidden});
  b_ih = ps.add(name + ".b_ih", {3 * hidden});
  b_hh = ps.add(name + ".b_hh", {3 * hidden});
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  init_uniform(w_ih, bound, rng);
  init_uniform(w_hh, bound, rng);
  init_uniform(b_ih, bound, rng);
  init_uniform(b_hh, bound, rng);
}

BatchNorm::BatchNorm(ParamSet& ps, const std::string& name, int num_channels) : channels(num_channels) {
  if (channels < 1) throw std::invalid_argument(name + ": invalid channels");
  gamma = ps.add(name + ".gamma", {channels});
  beta = ps.add(name + ".beta", {channels});
  running_mean = ps.add(name + ".running_mean", {channels}, false);
  running_var = ps.add(name + ".running_var", {channels}, false);
  for (double& v : gamma.value_mut()) v = 1.0;
  for (double& v : running_var.value_mut()) v = 1.0;
}

Var BatchNorm::operator()(const Var& x, bool training) const {
  if (!training) return ops::batch_norm_eval(x, gamma, beta, running_mean.value(), running_var.value(), eps);
  ops::BatchStats stats;
  Var y = ops::batch_norm_train(x, gamma, beta, eps, &stats);
  const double count = static_cast<double>(x.numel()) / channels;
  const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
  // Running estimates live in non-trainable leaves and are updated in place.
  auto& rm = running_mean.node()->value;
  auto& rv = running_var.node()->value;
  for (int c = 0; c < channels; ++c) {
    rm[c] = (1.0 - momentum) * rm[c] + momentum * stats.mean[c];
    rv[c] = (1.0 - momentum) * rv[c] + momentum * stats.var[c] * unbias;
  }
  return y;
}

}  // namespace bsplc::nn
