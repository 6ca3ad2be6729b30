// avsep/model/params.hpp

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
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "avsep/core/autodiff.hpp"
#include "avsep/core/rng.hpp"
#include "avsep/model/nn_ops.hpp"

namespace avsep::model {

/// Ordered, name-addressed collection of learnable tensors plus non-learnable
/// state buffers (normalization statistics). Insertion order is the canonical
/// parameter order used by the optimizer and the checkpoint payload.
class ParamStore {
 public:
  Var create(const std::string& name, NDArray init) {
    require(index_.find(name) == index_.end(),
            str_cat("ParamStore: duplicate parameter ", name));
    Var p = Var::param(std::move(init), name);
    index_[name] = params_.size();
    params_.emplace_back(name, p);
    return p;
  }

  bool has(const std::string& name) const {
    return index_.find(name) != index_.end();
  }

  Var get(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), str_cat("ParamStore: no parameter ", name));
    return params_[it->second].second;
  }

  NDArray& buffer(const std::string& name, NDArray init) {
    auto it = buffer_index_.find(name);
    if (it != buffer_index_.end()) return buffers_[it->second].second;
    buffer_index_[name] = buffers_.size();
    buffers_.emplace_back(name, std::move(init));
    return buffers_.back().second;
  }

  NDArray& buffer(const std::string& name) {
    auto it = buffer_index_.find(name);
    require(it != buffer_index_.end(),
            str_cat("ParamStore: no buffer ", name));
    return buffers_[it->second].second;
  }

  const std::vector<std::pair<std::string, Var>>& params() const {
    return params_;
  }
  const std::vector<std::pair<std::string, NDArray>>& buffers() const {
    return buffers_;
  }
  std::vector<std::pair<std::string, NDArray>>& buffers() { return buffers_; }

  std::size_t total_parameters() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += p.value().size();
    return n;
  }

  void zero_grads() {
    for (auto& [name, p] : params_) p.zero_grad();
  }

  /// Overwrites parameter values (and buffers) from another run's arrays.
  /// Every local tensor must be covered; extra source entries are ignored so
  /// a full training checkpoint can feed a reduced inference model.
  void load_values(
      const std::vector<std::pair<std::string, NDArray>>& param_values,
      const std::vector<std::pair<std::string, NDArray>>& buffer_values) {
    std::map<std::string, const NDArray*> by_name;
    for (const auto& [name, arr] : param_values) by_name[name] = &arr;
    for (auto& [name, p] : params_) {
      auto it = by_name.find(name);
      require(it != by_name.end(),
              str_cat("ParamStore: checkpoint missing parameter ", name));
      require(it->second->shape() == p.value().shape(),
              str_cat("ParamStore: shape mismatch for ", name));
      p.value_mut() = *it->second;
    }
    std::map<std::string, const NDArray*> buf_by_name;
    for (const auto& [name, arr] : buffer_values) buf_by_name[name] = &arr;
    for (auto& [name, arr] : buffers_) {
      auto it = buf_by_name.find(name);
      require(it != buf_by_name.end(),
              str_cat("ParamStore: checkpoint missing buffer ", name));
      require(it->second->shape() == arr.shape(),
              str_cat("ParamStore: buffer shape mismatch for ", name));
      arr = *it->second;
    }
  }

 private:
  std::vector<std::pair<std::string, Var>> params_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::pair<std::string, NDArray>> buffers_;
  std::map<std::string, std::size_t> buffer_index_;
};

namespace initdetail {

/// U(-a, a) with a = sqrt(1/fan_in).
inline NDArray uniform_fan_in(Rng& rng, const std::vector<std::size_t>& shape,
                              std::size_t fan_in) {
  const double a = std::sqrt(1.0 / static_cast<double>(fan_in));
  NDArray arr(shape);
  for (std::size_t i = 0; i < arr.size(); ++i) arr[i] = rng.uniform(-a, a);
  return arr;
}

/// Recurrent weights {4H,H}: one orthogonal H x H block per gate, signs
/// fixed by the QR factor's diagonal.
inline NDArray orthogonal_gates(Rng& rng, std::size_t hidden) {
  const auto hi = static_cast<Eigen::Index>(hidden);
  NDArray arr({4 * hidden, hidden});
  for (int g = 0; g < 4; ++g) {
    Eigen::MatrixXd a(hi, hi);
    for (Eigen::Index r = 0; r < hi; ++r)
      for (Eigen::Index c = 0; c < hi; ++c) a(r, c) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(hi, hi);
    Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index c = 0; c < hi; ++c)
      if (r(c, c) < 0.0) q.col(c) = -q.col(c);
    arr.mat().block(g * hi, 0, hi, hi) = q;
  }
  return arr;
}

/// Zero bias with the forget gate block at 1.
inline NDArray lstm_bias(std::size_t hidden) {
  NDArray b({4 * hidden, 1});
  for (std::size_t k = hidden; k < 2 * hidden; ++k) b[k] = 1.0;
  return b;
}

inline NDArray zeros(const std::vector<std::size_t>& shape) {
  return NDArray(shape);
}

inline NDArray ones(const std::vector<std::size_t>& shape) {
  NDArray arr(shape);
  arr.fill(1.0);
  return arr;
}

}  // namespace initdetail

/// Weights for one LSTM direction.
struct LstmParams {
  Var wx, wh, b;
};

inline LstmParams make_lstm(ParamStore& store, const std::string& prefix,
                            std::size_t in, std::size_t hidden, Rng& rng) {
  LstmParams p;
  p.wx = store.create(prefix + ".wx",
                      initdetail::uniform_fan_in(rng, {4 * hidden, in}, in));
  p.wh = store.create(prefix + ".wh", initdetail::orthogonal_gates(rng, hidden));
  p.b = store.create(prefix + ".b", initdetail::lstm_bias(hidden));
  return p;
}

/// Both directions of a BLSTM layer.
struct BlstmParams {
  LstmParams fwd, bwd;

  Var run(const Var& x) const {
    return nn::blstm(x, fwd.wx, fwd.wh, fwd.b, bwd.wx, bwd.wh, bwd.b);
  }
};

inline BlstmParams make_blstm(ParamStore& store, const std::string& prefix,
                              std::size_t in, std::size_t hidden, Rng& rng) {
  BlstmParams p;
  p.fwd = make_lstm(store, prefix + ".fwd", in, hidden, rng);
  p.bwd = make_lstm(store, prefix + ".bwd", in, hidden, rng);
  return p;
}

/// Affine layer y = W x + b.
struct LinearParams {
  Var w, b;

  Var run(const Var& x) const { return linear(w, x, b); }
};

inline LinearParams make_linear(ParamStore& store, const std::string& prefix,
                                std::size_t in, std::size_t out, Rng& rng) {
  LinearParams p;
  p.w = store.create(prefix + ".w",
                     initdetail::uniform_fan_in(rng, {out, in}, in));
  p.b = store.create(prefix + ".b", initdetail::zeros({out, 1}));
  return p;
}

}  // namespace avsep::model
