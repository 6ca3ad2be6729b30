// avsep/losses/losses.hpp

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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "avsep/core/autodiff.hpp"
#include "avsep/dsp/stft.hpp"

namespace avsep::losses {

struct LossConfig {
  double lambda = 1.0;
  double epsilon = 1e-8;
  // The correspondence sum grows with N and J; dividing by N*J decouples the
  // weight from segment length. Off by default.
  bool cmc_normalize = false;
  // Phase-sensitive targets |S| cos(dpsi) can go negative while estimated
  // magnitudes cannot; clamping at zero is the usual convention. The
  // unclamped literal form stays available for comparison.
  bool clamp_phase_target = true;
  std::size_t upit_max_sources = 4;  // permutation search is factorial

  void validate() const {
    require(lambda >= 0.0, "LossConfig: lambda must be >= 0");
    require(epsilon > 0.0, "LossConfig: epsilon must be > 0");
    require(upit_max_sources >= 1, "LossConfig: upit_max_sources >= 1");
  }
};

/// a.b / (max(|a|,eps) * max(|b|,eps)), clamped to [-1, 1]. Inputs are
/// treated as flat vectors.
inline double cosine_similarity(const NDArray& a, const NDArray& b,
                                double eps = 1e-8) {
  require(a.size() == b.size() && a.size() > 0,
          "cosine_similarity: size mismatch");
  require(a.all_finite() && b.all_finite(),
          "cosine_similarity: non-finite input");
  const double na = std::max(a.vec().norm(), eps);
  const double nb = std::max(b.vec().norm(), eps);
  return std::clamp(a.vec().dot(b.vec()) / (na * nb), -1.0, 1.0);
}

/// Correspondence loss over per-frame embedding columns: for every speaker n
/// and frame j, sum |cos| against every other speaker's paired embedding and
/// subtract the matched pair's cos. Differentiable; columns are c_v[n] and
/// c_avc[n], both D x J.
inline Var cmc_loss_graph(const std::vector<Var>& c_v,
                          const std::vector<Var>& c_avc,
                          const LossConfig& cfg) {
  cfg.validate();
  const std::size_t n_src = c_v.size();
  require(n_src >= 1 && c_avc.size() == n_src, "cmc_loss: speaker counts");
  const std::size_t d = c_v[0].value().rows();
  const std::size_t frames = c_v[0].value().cols();
  for (const auto& list : {std::cref(c_v), std::cref(c_avc)})
    for (const Var& m : list.get())
      require(m.value().rank() == 2 && m.value().rows() == d &&
                  m.value().cols() == frames,
              "cmc_loss: embedding shape mismatch");

  Var total = Var::constant(make_scalar(0.0));
  for (std::size_t n = 0; n < n_src; ++n) {
    total = sub(total,
                sum_all(colwise_cosine(c_v[n], c_avc[n], cfg.epsilon)));
    for (std::size_t m = 0; m < n_src; ++m) {
      if (m == n) continue;
      total = add(total, sum_all(abs_v(colwise_cosine(c_v[n], c_avc[m],
                                                      cfg.epsilon))));
    }
  }
  if (cfg.cmc_normalize)
    total = scale(total, 1.0 / static_cast<double>(n_src * frames));
  return total;
}

inline double cmc_loss(const std::vector<NDArray>& c_v,
                       const std::vector<NDArray>& c_avc,
                       const LossConfig& cfg) {
  NoGradGuard ng;
  std::vector<Var> v, a;
  for (const auto& m : c_v) v.push_back(Var::constant(m));
  for (const auto& m : c_avc) a.push_back(Var::constant(m));
  return scalar_value(cmc_loss_graph(v, a, cfg));
}

/// Mean squared magnitude error with the fixed speaker assignment the video
/// stream dictates: mean over I*J*N of (|Y_n| - |S_n|)^2.
inline Var mse_loss_graph(const std::vector<Var>& est_mag,
                          const std::vector<NDArray>& src_mag) {
  const std::size_t n_src = est_mag.size();
  require(n_src >= 1 && src_mag.size() == n_src, "mse_loss: source counts");
  const std::size_t bins = est_mag[0].value().rows();
  const std::size_t frames = est_mag[0].value().cols();
  Var total = Var::constant(make_scalar(0.0));
  for (std::size_t n = 0; n < n_src; ++n) {
    require(est_mag[n].value().rank() == 2 &&
                est_mag[n].value().rows() == bins &&
                est_mag[n].value().cols() == frames &&
                src_mag[n].rows() == bins && src_mag[n].cols() == frames,
            "mse_loss: shape mismatch");
    total = add(total, sum_all(square_v(
                           sub(est_mag[n], Var::constant(src_mag[n])))));
  }
  return scale(total, 1.0 / static_cast<double>(bins * frames * n_src));
}

inline double mse_loss(const std::vector<dsp::Spectrogram>& estimates,
                       const std::vector<dsp::Spectrogram>& sources) {
  NoGradGuard ng;
  std::vector<Var> est;
  std::vector<NDArray> src;
  for (const auto& s : estimates) est.push_back(Var::constant(s.magnitude()));
  for (const auto& s : sources) src.push_back(s.magnitude());
  return scalar_value(mse_loss_graph(est, src));
}

struct CombinedParts {
  double total = 0.0;
  double mse = 0.0;
  double cmc = 0.0;
};

/// total = mse + lambda * cmc. With lambda = 0 this is exactly the plain
/// magnitude-MSE objective.
inline CombinedParts combined_loss(
    const std::vector<dsp::Spectrogram>& estimates,
    const std::vector<dsp::Spectrogram>& sources,
    const std::vector<NDArray>& c_v, const std::vector<NDArray>& c_avc,
    const LossConfig& cfg) {
  cfg.validate();
  CombinedParts parts;
  parts.mse = mse_loss(estimates, sources);
  parts.cmc = cmc_loss(c_v, c_avc, cfg);
  parts.total = parts.mse + cfg.lambda * parts.cmc;
  return parts;
}

/// |S_n| .* cos(psi_X - psi_n), optionally clamped at zero.
inline std::vector<NDArray> phase_sensitive_targets(
    const std::vector<dsp::Spectrogram>& sources, const NDArray& mix_phase,
    bool clamp) {
  std::vector<NDArray> targets;
  targets.reserve(sources.size());
  for (const auto& s : sources) {
    require(s.bins() == mix_phase.rows() && s.frames() == mix_phase.cols(),
            "phase_sensitive_targets: shape mismatch");
    NDArray t({s.bins(), s.frames()});
    NDArray mag = s.magnitude();
    NDArray ph = s.phase();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double v = mag[i] * std::cos(mix_phase[i] - ph[i]);
      t[i] = clamp ? std::max(0.0, v) : v;
    }
    targets.push_back(std::move(t));
  }
  return targets;
}

namespace upitdetail {

inline double assignment_cost(const std::vector<const NDArray*>& est,
                              const std::vector<NDArray>& targets,
                              const std::vector<std::size_t>& perm) {
  double acc = 0.0;
  for (std::size_t n = 0; n < est.size(); ++n)
    acc += (est[n]->mat() - targets[perm[n]].mat()).squaredNorm();
  const double count = static_cast<double>(
      est.size() * est[0]->rows() * est[0]->cols());
  return acc / count;
}

inline std::vector<std::size_t> best_permutation(
    const std::vector<const NDArray*>& est,
    const std::vector<NDArray>& targets) {
  std::vector<std::size_t> perm(est.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::size_t> best = perm;
  double best_cost = assignment_cost(est, targets, perm);
  while (std::next_permutation(perm.begin(), perm.end())) {
    const double c = assignment_cost(est, targets, perm);
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  }
  return best;
}

}  // namespace upitdetail

struct UpitResult {
  double loss = 0.0;
  std::vector<std::size_t> permutation;
};

/// Phase-sensitive permutation-invariant cost: minimum over all source
/// orderings of the mean squared error against |S| cos(dpsi) targets.
inline UpitResult upit_loss(const std::vector<NDArray>& est_mag,
                            const std::vector<dsp::Spectrogram>& sources,
                            const NDArray& mix_phase, const LossConfig& cfg) {
  cfg.validate();
  const std::size_t n_src = est_mag.size();
  require(n_src >= 1 && sources.size() == n_src, "upit_loss: source counts");
  require(n_src <= cfg.upit_max_sources,
          "upit_loss: too many sources for factorial search");
  for (const auto& e : est_mag)
    require(e.rank() == 2 && e.rows() == mix_phase.rows() &&
                e.cols() == mix_phase.cols(),
            "upit_loss: estimate shape mismatch");
  const std::vector<NDArray> targets =
      phase_sensitive_targets(sources, mix_phase, cfg.clamp_phase_target);
  std::vector<const NDArray*> est;
  for (const auto& e : est_mag) est.push_back(&e);
  UpitResult r;
  r.permutation = upitdetail::best_permutation(est, targets);
  r.loss = upitdetail::assignment_cost(est, targets, r.permutation);
  return r;
}

struct UpitGraph {
  Var loss;
  std::vector<std::size_t> permutation;
};

/// Differentiable variant against precomputed targets: the winning
/// permutation is chosen on values, then only that branch enters the graph.
inline UpitGraph upit_loss_graph(const std::vector<Var>& est_mag,
                                 const std::vector<NDArray>& targets,
                                 const LossConfig& cfg) {
  cfg.validate();
  const std::size_t n_src = est_mag.size();
  require(n_src >= 1 && targets.size() == n_src,
          "upit_loss_graph: source counts");
  require(n_src <= cfg.upit_max_sources,
          "upit_loss_graph: too many sources for factorial search");
  std::vector<const NDArray*> est;
  for (const auto& e : est_mag) est.push_back(&e.value());
  UpitGraph g;
  g.permutation = upitdetail::best_permutation(est, targets);
  Var total = Var::constant(make_scalar(0.0));
  for (std::size_t n = 0; n < n_src; ++n)
    total = add(total,
                sum_all(square_v(sub(
                    est_mag[n], Var::constant(targets[g.permutation[n]])))));
  const double count = static_cast<double>(
      n_src * est_mag[0].value().rows() * est_mag[0].value().cols());
  g.loss = scale(total, 1.0 / count);
  return g;
}

}  // namespace avsep::losses
