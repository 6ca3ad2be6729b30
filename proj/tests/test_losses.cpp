// tests/test_losses.cpp

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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "avsep/losses/losses.hpp"
#include "oracles.hpp"
#include "testing.hpp"

using namespace avsep;
using namespace avsep::losses;
using avsep::testing::max_grad_rel_err;
using avsep::testing::randn;

namespace {

std::vector<NDArray> random_embeddings(Rng& rng, std::size_t n,
                                       std::size_t d, std::size_t frames) {
  std::vector<NDArray> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back(randn(rng, {d, frames}));
  return out;
}

dsp::Spectrogram random_spec(Rng& rng, std::size_t bins, std::size_t frames) {
  dsp::Spectrogram s;
  s.sample_rate = 8000.0;
  s.config.window_length_ms = (static_cast<double>(bins) - 1.0) * 2.0 / 8.0;
  s.config.hop_length_ms = s.config.window_length_ms / 2.0;
  s.values.resize(static_cast<Eigen::Index>(bins),
                  static_cast<Eigen::Index>(frames));
  for (Eigen::Index i = 0; i < s.values.size(); ++i)
    s.values.data()[i] = {rng.normal(), rng.normal()};
  return s;
}

double min_abs_pair_cosine(const std::vector<NDArray>& c_v,
                           const std::vector<NDArray>& c_avc) {
  double worst = 1.0;
  for (const auto& v : c_v)
    for (const auto& a : c_avc)
      for (std::size_t j = 0; j < v.cols(); ++j)
        worst = std::min(worst,
                         std::fabs(avsep::testing::oracle_cosine(
                             avsep::testing::oracle_column(v, j),
                             avsep::testing::oracle_column(a, j), 1e-8)));
  return worst;
}

}  // namespace

TEST_CASE("cosine_similarity basics") {
  REQUIRE(cosine_similarity(make_matrix(2, 1, {1, 0}),
                            make_matrix(2, 1, {1, 0})) == 1.0);
  REQUIRE(cosine_similarity(make_matrix(2, 1, {1, 0}),
                            make_matrix(2, 1, {0, 1})) == 0.0);
  REQUIRE(cosine_similarity(make_matrix(3, 1, {1, 2, 3}),
                            make_matrix(3, 1, {4, 5, 6})) ==
          Catch::Approx(0.974632).margin(1e-6));
  // Zero vector against a unit vector: the epsilon guard yields ~0.
  REQUIRE(cosine_similarity(make_matrix(2, 1, {0, 0}),
                            make_matrix(2, 1, {1, 0})) == 0.0);
}

TEST_CASE("correspondence loss on the orthonormal ideal is -N") {
  std::vector<NDArray> c_v = {make_matrix(2, 1, {1, 0}),
                              make_matrix(2, 1, {0, 1})};
  LossConfig cfg;
  REQUIRE(cmc_loss(c_v, c_v, cfg) == Catch::Approx(-2.0).margin(1e-12));
}

TEST_CASE("correspondence loss vanishes when every embedding collapses") {
  std::vector<NDArray> same = {make_matrix(2, 1, {0.7, 0.3}),
                               make_matrix(2, 1, {0.7, 0.3})};
  LossConfig cfg;
  REQUIRE(cmc_loss(same, same, cfg) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("correspondence loss matches the scalar-loop oracle") {
  Rng rng(41);
  auto c_v = random_embeddings(rng, 3, 5, 4);
  auto c_avc = random_embeddings(rng, 3, 5, 4);
  LossConfig cfg;
  const double expect =
      avsep::testing::oracle_cmc(c_v, c_avc, cfg.epsilon, false);
  REQUIRE(cmc_loss(c_v, c_avc, cfg) == Catch::Approx(expect).margin(1e-6));
  cfg.cmc_normalize = true;
  REQUIRE(cmc_loss(c_v, c_avc, cfg) ==
          Catch::Approx(expect / 12.0).margin(1e-9));
}

TEST_CASE("correspondence loss respects its bounds") {
  Rng rng(42);
  LossConfig cfg;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 2 + rng.index(3);
    const std::size_t frames = 1 + rng.index(5);
    auto c_v = random_embeddings(rng, n, 4, frames);
    auto c_avc = random_embeddings(rng, n, 4, frames);
    const double loss = cmc_loss(c_v, c_avc, cfg);
    const double nn = static_cast<double>(n);
    const double jj = static_cast<double>(frames);
    REQUIRE(loss >= -nn * jj - 1e-9);
    REQUIRE(loss <= nn * (nn - 1.0) * jj + 1e-9);
  }
}

TEST_CASE("correspondence loss ignores positive per-column rescaling") {
  Rng rng(43);
  auto c_v = random_embeddings(rng, 2, 4, 3);
  auto c_avc = random_embeddings(rng, 2, 4, 3);
  LossConfig cfg;
  const double before = cmc_loss(c_v, c_avc, cfg);
  for (auto& m : c_v)
    for (std::size_t j = 0; j < m.cols(); ++j) {
      const double s = rng.uniform(0.1, 9.0);
      for (std::size_t i = 0; i < m.rows(); ++i) m.at(i, j) *= s;
    }
  for (auto& m : c_avc)
    for (std::size_t j = 0; j < m.cols(); ++j) {
      const double s = rng.uniform(0.1, 9.0);
      for (std::size_t i = 0; i < m.rows(); ++i) m.at(i, j) *= s;
    }
  REQUIRE(cmc_loss(c_v, c_avc, cfg) == Catch::Approx(before).margin(1e-9));
}

TEST_CASE("correspondence loss gradients match finite differences") {
  Rng rng(44);
  std::vector<Var> leaves;
  for (int k = 0; k < 4; ++k)
    leaves.push_back(Var::param(randn(rng, {4, 3}), "e"));
  {
    // Stay clear of the |.| kink where the subgradient convention and the
    // finite difference disagree.
    std::vector<NDArray> cv = {leaves[0].value(), leaves[1].value()};
    std::vector<NDArray> ca = {leaves[2].value(), leaves[3].value()};
    REQUIRE(min_abs_pair_cosine(cv, ca) > 1e-3);
  }
  LossConfig cfg;
  auto fn = [&cfg](std::vector<Var>& p) {
    std::vector<Var> cv = {p[0], p[1]}, ca = {p[2], p[3]};
    return cmc_loss_graph(cv, ca, cfg);
  };
  REQUIRE(max_grad_rel_err(fn, leaves) < 1e-4);
}

TEST_CASE("magnitude mse basics and oracle agreement") {
  Rng rng(45);
  std::vector<dsp::Spectrogram> src = {random_spec(rng, 5, 6),
                                       random_spec(rng, 5, 6)};
  REQUIRE(mse_loss(src, src) == Catch::Approx(0.0).margin(1e-12));

  // All-zero estimate against constant magnitude 2: mean square is 4.
  dsp::Spectrogram zero = src[0];
  zero.values.setZero();
  dsp::Spectrogram two = src[0];
  two.values.setConstant({0.0, 2.0});
  REQUIRE(mse_loss({zero}, {two}) == Catch::Approx(4.0).margin(1e-12));

  std::vector<dsp::Spectrogram> est = {random_spec(rng, 5, 6),
                                       random_spec(rng, 5, 6)};
  std::vector<NDArray> est_mag = {est[0].magnitude(), est[1].magnitude()};
  std::vector<NDArray> src_mag = {src[0].magnitude(), src[1].magnitude()};
  REQUIRE(mse_loss(est, src) ==
          Catch::Approx(avsep::testing::oracle_mse(est_mag, src_mag))
              .margin(1e-6));
}

TEST_CASE("magnitude mse gradients match finite differences") {
  Rng rng(46);
  std::vector<Var> leaves = {Var::param(randn(rng, {4, 5}), "m0"),
                             Var::param(randn(rng, {4, 5}), "m1")};
  std::vector<NDArray> src = {randn(rng, {4, 5}), randn(rng, {4, 5})};
  auto fn = [&src](std::vector<Var>& p) {
    std::vector<Var> est = {p[0], p[1]};
    return mse_loss_graph(est, src);
  };
  REQUIRE(max_grad_rel_err(fn, leaves) < 1e-5);
}

TEST_CASE("combined objective composes mse and correspondence terms") {
  Rng rng(47);
  std::vector<dsp::Spectrogram> est = {random_spec(rng, 4, 3),
                                       random_spec(rng, 4, 3)};
  std::vector<dsp::Spectrogram> src = {random_spec(rng, 4, 3),
                                       random_spec(rng, 4, 3)};
  auto c_v = random_embeddings(rng, 2, 4, 3);
  auto c_avc = random_embeddings(rng, 2, 4, 3);

  LossConfig cfg;
  cfg.lambda = 0.0;
  CombinedParts zero = combined_loss(est, src, c_v, c_avc, cfg);
  REQUIRE(zero.total == zero.mse);

  for (double lambda : {0.1, 1.0, 10.0, 100.0}) {
    cfg.lambda = lambda;
    cfg.validate();
    CombinedParts p = combined_loss(est, src, c_v, c_avc, cfg);
    REQUIRE(p.total == Catch::Approx(p.mse + lambda * p.cmc).margin(1e-12));
  }
  cfg.lambda = -0.5;
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("permutation search returns zero loss on exact targets") {
  Rng rng(48);
  std::vector<dsp::Spectrogram> src = {random_spec(rng, 4, 5),
                                       random_spec(rng, 4, 5)};
  NDArray mix_phase = randn(rng, {4, 5});
  LossConfig cfg;
  std::vector<NDArray> est =
      phase_sensitive_targets(src, mix_phase, cfg.clamp_phase_target);
  UpitResult r = upit_loss(est, src, mix_phase, cfg);
  REQUIRE(r.loss == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(r.permutation == std::vector<std::size_t>({0, 1}));
}

TEST_CASE("permutation search is invariant to source order") {
  Rng rng(49);
  std::vector<dsp::Spectrogram> src = {random_spec(rng, 5, 4),
                                       random_spec(rng, 5, 4),
                                       random_spec(rng, 5, 4)};
  std::vector<NDArray> est = {randn(rng, {5, 4}), randn(rng, {5, 4}),
                              randn(rng, {5, 4})};
  NDArray mix_phase = randn(rng, {5, 4});
  LossConfig cfg;
  const double forward = upit_loss(est, src, mix_phase, cfg).loss;
  std::vector<dsp::Spectrogram> swapped = {src[2], src[0], src[1]};
  REQUIRE(upit_loss(est, swapped, mix_phase, cfg).loss ==
          Catch::Approx(forward).margin(1e-12));
}

TEST_CASE("permutation search matches the brute-force oracle") {
  Rng rng(50);
  std::vector<dsp::Spectrogram> src = {random_spec(rng, 6, 4),
                                       random_spec(rng, 6, 4),
                                       random_spec(rng, 6, 4)};
  std::vector<NDArray> est = {randn(rng, {6, 4}), randn(rng, {6, 4}),
                              randn(rng, {6, 4})};
  NDArray mix_phase = randn(rng, {6, 4});
  std::vector<NDArray> src_mag, src_phase;
  for (const auto& s : src) {
    src_mag.push_back(s.magnitude());
    src_phase.push_back(s.phase());
  }
  for (bool clamp : {true, false}) {
    LossConfig cfg;
    cfg.clamp_phase_target = clamp;
    UpitResult r = upit_loss(est, src, mix_phase, cfg);
    auto [oracle_loss, oracle_perm] = avsep::testing::oracle_upit(
        est, src_mag, src_phase, mix_phase, clamp);
    REQUIRE(r.loss == Catch::Approx(oracle_loss).margin(1e-6));
    REQUIRE(r.permutation == oracle_perm);
  }
}

TEST_CASE("permutation search lower-bounds every fixed assignment") {
  Rng rng(51);
  std::vector<dsp::Spectrogram> src = {random_spec(rng, 4, 4),
                                       random_spec(rng, 4, 4),
                                       random_spec(rng, 4, 4)};
  std::vector<NDArray> est = {randn(rng, {4, 4}), randn(rng, {4, 4}),
                              randn(rng, {4, 4})};
  NDArray mix_phase = randn(rng, {4, 4});
  LossConfig cfg;
  const double best = upit_loss(est, src, mix_phase, cfg).loss;
  const std::vector<NDArray> targets =
      phase_sensitive_targets(src, mix_phase, true);
  for (const auto& perm : avsep::testing::oracle_permutations(3)) {
    double acc = 0.0;
    for (std::size_t n = 0; n < 3; ++n)
      acc += (est[n].mat() - targets[perm[n]].mat()).squaredNorm();
    acc /= static_cast<double>(3 * 4 * 4);
    REQUIRE(best <= acc + 1e-12);
  }
}

TEST_CASE("permutation search rejects too many sources") {
  Rng rng(52);
  std::vector<dsp::Spectrogram> src;
  std::vector<NDArray> est;
  for (int k = 0; k < 5; ++k) {
    src.push_back(random_spec(rng, 3, 3));
    est.push_back(randn(rng, {3, 3}));
  }
  NDArray mix_phase = randn(rng, {3, 3});
  LossConfig cfg;  // bound 4
  REQUIRE_THROWS_AS(upit_loss(est, src, mix_phase, cfg),
                    std::invalid_argument);
}

TEST_CASE("clamping the phase-sensitive target changes negative cells only") {
  dsp::Spectrogram s;
  s.sample_rate = 8000.0;
  s.config.window_length_ms = 0.25;
  s.config.hop_length_ms = 0.25;
  s.values.resize(2, 1);
  s.values(0, 0) = {1.0, 0.0};   // phase 0
  s.values(1, 0) = {-2.0, 0.0};  // phase pi, magnitude 2
  NDArray mix_phase({2, 1});     // zero phase
  auto clamped = phase_sensitive_targets({s}, mix_phase, true);
  auto literal = phase_sensitive_targets({s}, mix_phase, false);
  REQUIRE(clamped[0].at(0, 0) == Catch::Approx(1.0));
  REQUIRE(literal[0].at(0, 0) == Catch::Approx(1.0));
  REQUIRE(clamped[0].at(1, 0) == 0.0);
  REQUIRE(literal[0].at(1, 0) == Catch::Approx(-2.0));
}

TEST_CASE("differentiable permutation loss agrees and differentiates") {
  Rng rng(53);
  std::vector<dsp::Spectrogram> src = {random_spec(rng, 4, 4),
                                       random_spec(rng, 4, 4)};
  NDArray mix_phase = randn(rng, {4, 4});
  LossConfig cfg;
  const std::vector<NDArray> targets =
      phase_sensitive_targets(src, mix_phase, true);

  std::vector<Var> leaves = {Var::param(randn(rng, {4, 4}), "e0"),
                             Var::param(randn(rng, {4, 4}), "e1")};
  std::vector<Var> est = {leaves[0], leaves[1]};
  UpitGraph g = upit_loss_graph(est, targets, cfg);
  std::vector<NDArray> est_vals = {leaves[0].value(), leaves[1].value()};
  REQUIRE(scalar_value(g.loss) ==
          Catch::Approx(upit_loss(est_vals, src, mix_phase, cfg).loss)
              .margin(1e-12));

  auto fn = [&targets, &cfg](std::vector<Var>& p) {
    std::vector<Var> e = {p[0], p[1]};
    return upit_loss_graph(e, targets, cfg).loss;
  };
  REQUIRE(max_grad_rel_err(fn, leaves) < 1e-5);
}
