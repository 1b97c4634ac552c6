// Copyright 2026 The wbcbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Core>

#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "wbc/core/error.hpp"
#include "wbc/core/rng.hpp"

namespace wbc {

using Index = Eigen::Index;
using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixF = Eigen::MatrixXf;

// Dense n-d float array, row-major (NCHW for feature maps, NTD for token
// sequences). Value semantics; Eigen maps provide the linear-algebra views.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<Index> dims, float fill = 0.0f) : dims_(std::move(dims)) {
    data_.setConstant(count(dims_), fill);
  }

  static Tensor zeros(std::vector<Index> dims) { return Tensor(std::move(dims), 0.0f); }

  static Tensor randn(std::vector<Index> dims, Rng& rng, float stddev = 1.0f) {
    Tensor t(std::move(dims));
    for (Index i = 0; i < t.size(); ++i) t.data_[i] = static_cast<float>(rng.normal()) * stddev;
    return t;
  }

  const std::vector<Index>& dims() const { return dims_; }
  Index dim(int i) const { return dims_.at(static_cast<std::size_t>(i)); }
  int rank() const { return static_cast<int>(dims_.size()); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float& operator[](Index i) { return data_[i]; }
  float operator[](Index i) const { return data_[i]; }

  Eigen::Map<Eigen::ArrayXf> flat() { return {data_.data(), data_.size()}; }
  Eigen::Map<const Eigen::ArrayXf> flat() const { return {data_.data(), data_.size()}; }

  // Maps the contiguous storage as a rows x cols row-major matrix.
  Eigen::Map<RowMatrixF> matrix(Index rows, Index cols) {
    check_count(rows * cols);
    return {data_.data(), rows, cols};
  }
  Eigen::Map<const RowMatrixF> matrix(Index rows, Index cols) const {
    check_count(rows * cols);
    return {data_.data(), rows, cols};
  }

  // Collapses all leading dims against the last one; the layout used by
  // layers that act on feature vectors (linear, layer norm, dropout on
  // tokens).
  Eigen::Map<RowMatrixF> rows_by_last_dim() {
    Index cols = dims_.back();
    return {data_.data(), data_.size() / cols, cols};
  }
  Eigen::Map<const RowMatrixF> rows_by_last_dim() const {
    Index cols = dims_.back();
    return {data_.data(), data_.size() / cols, cols};
  }

  // In-place metadata change; element count must be preserved.
  Tensor& reshape(std::vector<Index> dims) {
    if (count(dims) != data_.size()) {
      throw ValidationError("tensor reshape to " + dims_string(dims) + " does not preserve size " +
                            std::to_string(data_.size()));
    }
    dims_ = std::move(dims);
    return *this;
  }

  Tensor reshaped(std::vector<Index> dims) const {
    Tensor t = *this;
    t.reshape(std::move(dims));
    return t;
  }

  // NCHW accessors (rank-4 only).
  float& at4(Index n, Index c, Index h, Index w) {
    return data_[((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }
  float at4(Index n, Index c, Index h, Index w) const {
    return data_[((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }

  bool same_dims(const Tensor& other) const { return dims_ == other.dims_; }

  std::string dims_string() const { return dims_string(dims_); }

  static std::string dims_string(const std::vector<Index>& dims) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
    os << ")";
    return os.str();
  }

 private:
  static Index count(const std::vector<Index>& dims) {
    Index n = 1;
    for (Index d : dims) n *= d;
    return dims.empty() ? 0 : n;
  }
  void check_count(Index n) const {
    if (n != data_.size()) {
      throw ValidationError("tensor view of " + std::to_string(n) + " elements over storage of " +
                            std::to_string(data_.size()));
    }
  }

  std::vector<Index> dims_;
  Eigen::ArrayXf data_;
};

}  // namespace wbc
