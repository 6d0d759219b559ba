#pragma once

// Helpers shared by the unit tests: seeded random data, finite-difference
// gradient checks and scratch directories.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "bsplc/random.hpp"
#include "bsplc/tensor.hpp"

namespace testutil {

inline std::vector<double> random_vec(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  bsplc::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline bsplc::ad::Var random_var(bsplc::ad::Shape shape, std::uint64_t seed, bool grad = true, double lo = -1.0,
                                 double hi = 1.0) {
  const std::size_t n = bsplc::ad::numel(shape);
  return bsplc::ad::Var(std::move(shape), random_vec(n, seed, lo, hi), grad);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Largest relative error between the analytic gradient of f() with respect
/// to each input and a central difference of step h. `max_checks` bounds
/// the entries probed per input (spread evenly).
inline double gradient_error(const std::function<bsplc::ad::Var()>& f, std::vector<bsplc::ad::Var> inputs,
                             double h = 1e-6, std::size_t max_checks = 40) {
  for (auto& v : inputs) v.zero_grad();
  bsplc::ad::backward(f());
  double worst = 0.0;
  for (auto& v : inputs) {
    const std::vector<double> g = v.grad().empty() ? std::vector<double>(v.numel(), 0.0) : v.grad();
    const std::size_t n = v.numel();
    const std::size_t step = std::max<std::size_t>(1, n / max_checks);
    for (std::size_t i = 0; i < n; i += step) {
      double& x = v.value_mut()[i];
      const double x0 = x;
      x = x0 + h;
      const double fp = f().item();
      x = x0 - h;
      const double fm = f().item();
      x = x0;
      const double fd = (fp - fm) / (2.0 * h);
      const double err = std::abs(fd - g[i]) / std::max({1e-3, std::abs(fd), std::abs(g[i])});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("bsplc_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testutil
