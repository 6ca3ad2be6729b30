// avsep/train/adam.hpp

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
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "avsep/core/autodiff.hpp"
#include "avsep/core/common.hpp"
#include "avsep/core/ndarray.hpp"
#include "avsep/model/params.hpp"

namespace avsep::train {

struct AdamConfig {
  double learning_rate = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second-moment adaptive steps with bias correction, applied in the
/// parameter store's registration order. A parameter whose gradient buffer
/// was never touched this step counts as a zero gradient.
class Adam {
 public:
  Adam(model::ParamStore& store, const AdamConfig& cfg)
      : store_(&store), cfg_(cfg) {
    require(cfg.learning_rate > 0.0, "Adam: learning_rate must be positive");
    require(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 &&
                cfg.beta2 < 1.0,
            "Adam: betas must lie in [0, 1)");
    for (const auto& [name, var] : store.params()) {
      m_.emplace_back(name, NDArray(var.value().shape()));
      v_.emplace_back(name, NDArray(var.value().shape()));
      m_.back().second.fill(0.0);
      v_.back().second.fill(0.0);
    }
  }

  /// Scales every gradient so the global norm is at most max_norm; returns
  /// the norm before clipping.
  double clip_global_norm(double max_norm) {
    require(max_norm > 0.0, "clip_global_norm: max_norm must be positive");
    double sq = 0.0;
    for (const auto& [name, var] : store_->params()) {
      const NDArray& g = var.grad();
      for (std::size_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
      const double s = max_norm / norm;
      for (const auto& [name, var] : store_->params()) {
        Var handle = var;  // shared node, mutation reaches the store
        NDArray& g = handle.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= s;
      }
    }
    return norm;
  }

  void step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    const auto& params = store_->params();
    require_state(params.size() == m_.size(),
                  "Adam: parameter set changed after construction");
    for (std::size_t p = 0; p < params.size(); ++p) {
      Var var = params[p].second;
      NDArray& value = var.value_mut();
      const NDArray& g = var.grad();
      NDArray& m = m_[p].second;
      NDArray& v = v_[p].second;
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double gi = i < g.size() ? g[i] : 0.0;
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        value[i] -= cfg_.learning_rate * mhat /
                    (std::sqrt(vhat) + cfg_.epsilon);
      }
    }
  }

  std::int64_t steps() const { return step_; }
  const std::vector<std::pair<std::string, NDArray>>& first_moments() const {
    return m_;
  }
  const std::vector<std::pair<std::string, NDArray>>& second_moments() const {
    return v_;
  }

  /// Restores saved moments, matched by parameter name and shape.
  void load_state(std::int64_t steps,
                  const std::vector<std::pair<std::string, NDArray>>& m,
                  const std::vector<std::pair<std::string, NDArray>>& v) {
    require(steps >= 0, "Adam: negative step count");
    require(m.size() == m_.size() && v.size() == v_.size(),
            "Adam: moment list size mismatch");
    for (std::size_t p = 0; p < m_.size(); ++p) {
      require(m[p].first == m_[p].first && v[p].first == v_[p].first,
              "Adam: moment name mismatch at ", m_[p].first);
      require(m[p].second.shape() == m_[p].second.shape() &&
                  v[p].second.shape() == v_[p].second.shape(),
              "Adam: moment shape mismatch at ", m_[p].first);
      m_[p].second = m[p].second;
      v_[p].second = v[p].second;
    }
    step_ = steps;
  }

 private:
  model::ParamStore* store_;
  AdamConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<std::pair<std::string, NDArray>> m_, v_;
};

}  // namespace avsep::train
