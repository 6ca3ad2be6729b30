// avsep/core/ndarray.hpp

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

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "avsep/core/common.hpp"

namespace avsep {

using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMajorMatrix>;
using ConstMatMap = Eigen::Map<const RowMajorMatrix>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

/// Dense row-major double tensor. Rank 2 is the workhorse (feature matrices
/// D x J, spectrogram magnitudes I x J); rank 4 {C, F, H, W} carries video
/// activations. Element math goes through Eigen maps on the flat storage.
class NDArray {
 public:
  NDArray() = default;
  explicit NDArray(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)),
        data_(std::accumulate(shape_.begin(), shape_.end(), std::size_t{1},
                              std::multiplies<>()),
              fill) {
    require(!shape_.empty(), "NDArray: rank-0 shape");
  }

  static NDArray zeros_like(const NDArray& other) {
    return NDArray(other.shape_);
  }

  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  bool same_shape(const NDArray& other) const {
    return shape_ == other.shape_;
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Rank-2 access.
  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 0; }
  std::size_t cols() const { return shape_.size() == 2 ? shape_[1] : 0; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  // Rank-4 access, layout {C, F, H, W}.
  double& at4(std::size_t c, std::size_t f, std::size_t h, std::size_t w) {
    return data_[((c * shape_[1] + f) * shape_[2] + h) * shape_[3] + w];
  }
  double at4(std::size_t c, std::size_t f, std::size_t h,
             std::size_t w) const {
    return data_[((c * shape_[1] + f) * shape_[2] + h) * shape_[3] + w];
  }

  MatMap mat() {
    require(rank() == 2, "NDArray::mat on rank ", rank());
    return MatMap(data_.data(), static_cast<Eigen::Index>(shape_[0]),
                  static_cast<Eigen::Index>(shape_[1]));
  }
  ConstMatMap mat() const {
    require(rank() == 2, "NDArray::mat on rank ", rank());
    return ConstMatMap(data_.data(), static_cast<Eigen::Index>(shape_[0]),
                       static_cast<Eigen::Index>(shape_[1]));
  }
  VecMap vec() {
    return VecMap(data_.data(), static_cast<Eigen::Index>(data_.size()));
  }
  ConstVecMap vec() const {
    return ConstVecMap(data_.data(), static_cast<Eigen::Index>(data_.size()));
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const NDArray& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

inline NDArray make_scalar(double v) {
  NDArray a({1, 1});
  a[0] = v;
  return a;
}

inline NDArray make_matrix(std::size_t rows, std::size_t cols,
                           std::initializer_list<double> vals) {
  NDArray a({rows, cols});
  require(vals.size() == rows * cols, "make_matrix: size mismatch");
  std::size_t i = 0;
  for (double v : vals) a[i++] = v;
  return a;
}

}  // namespace avsep
