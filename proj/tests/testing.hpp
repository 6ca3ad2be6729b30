// tests/testing.hpp

// Copyright 2026  avsep contributors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "avsep/core/autodiff.hpp"
#include "avsep/core/rng.hpp"

namespace avsep::testing {

inline NDArray randn(Rng& rng, std::vector<std::size_t> shape,
                     double stddev = 1.0) {
  NDArray a(std::move(shape));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.normal(0.0, stddev);
  return a;
}

/// Relative error with an absolute floor: components much smaller than the
/// floor sit below central-difference roundoff and compare as equal.
inline double rel_err(double a, double b, double floor_mag = 1e-4) {
  const double denom = std::max({std::abs(a), std::abs(b), floor_mag});
  return std::abs(a - b) / denom;
}

/// Central finite differences against the tape, every coordinate of every
/// leaf. The callable must rebuild the whole graph from the leaves so that
/// perturbed evaluations see the new values.
inline double max_grad_rel_err(
    const std::function<Var(std::vector<Var>&)>& fn, std::vector<Var>& leaves,
    double eps = 1e-5) {
  for (auto& leaf : leaves) leaf.zero_grad();
  Var loss = fn(leaves);
  backward(loss);
  double worst = 0.0;
  for (auto& leaf : leaves) {
    for (std::size_t i = 0; i < leaf.value().size(); ++i) {
      const double orig = leaf.value()[i];
      double up, down;
      {
        NoGradGuard ng;
        leaf.value_mut()[i] = orig + eps;
        up = scalar_value(fn(leaves));
        leaf.value_mut()[i] = orig - eps;
        down = scalar_value(fn(leaves));
        leaf.value_mut()[i] = orig;
      }
      const double fd = (up - down) / (2.0 * eps);
      worst = std::max(worst, rel_err(leaf.grad()[i], fd));
    }
  }
  return worst;
}

/// As max_grad_rel_err, but probes a random sample of coordinates so big
/// graphs stay affordable. Every leaf gets at least one probe. Coordinates
/// whose central differences have not converged across three step sizes sit
/// in a kink neighborhood (a rectifier or |.| crossing inside the perturbed
/// span); those probes are excluded, matching the smoothness caveat the
/// gradient contract carries. A crossing close to the nominal point can bias
/// two estimates almost identically, so self-consistency is demanded at the
/// same 1e-4 tolerance callers enforce, across spans shrinking 64-fold.
inline double sampled_grad_rel_err(
    const std::function<Var(std::vector<Var>&)>& fn, std::vector<Var>& leaves,
    std::size_t probes_per_leaf, Rng& pick, double eps = 1e-5) {
  for (auto& leaf : leaves) leaf.zero_grad();
  Var loss = fn(leaves);
  backward(loss);
  auto central = [&](Var& leaf, std::size_t i, double step) {
    const double orig = leaf.value()[i];
    NoGradGuard ng;
    leaf.value_mut()[i] = orig + step;
    const double up = scalar_value(fn(leaves));
    leaf.value_mut()[i] = orig - step;
    const double down = scalar_value(fn(leaves));
    leaf.value_mut()[i] = orig;
    return (up - down) / (2.0 * step);
  };
  double worst = 0.0;
  for (auto& leaf : leaves) {
    for (std::size_t p = 0; p < probes_per_leaf; ++p) {
      const std::size_t i = pick.index(leaf.value().size());
      const double fd_wide = central(leaf, i, eps);
      const double fd_mid = central(leaf, i, eps / 8.0);
      const double fd = central(leaf, i, eps / 64.0);
      if (rel_err(fd_wide, fd_mid) > 1e-4) continue;
      if (rel_err(fd_mid, fd) > 1e-4) continue;
      worst = std::max(worst, rel_err(leaf.grad()[i], fd));
    }
  }
  return worst;
}

}  // namespace avsep::testing
