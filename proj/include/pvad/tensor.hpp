// Copyright (c) 2026 The pvadbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <numeric>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pvad/error.hpp"

namespace pvad::nn {

// Row-major throughout: frame t is a contiguous row.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

// Dense value with explicit shape, stored row-major.  Rank 1 or 2 in
// practice; everything heavier lives as Eigen expressions over map().
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(flat_size(shape_), 0.0) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != flat_size(shape_)) throw ShapeError("tensor data does not match shape");
  }

  static Tensor from_mat(const Mat& m) {
    Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    Eigen::Map<Mat>(t.data_.data(), m.rows(), m.cols()) = m;
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }

  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return rank() >= 2 ? shape_[1] : 1; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  // 2-D view; a rank-1 tensor maps as a column.
  Eigen::Map<Mat> map() {
    return Eigen::Map<Mat>(data_.data(), static_cast<Eigen::Index>(rows()),
                           static_cast<Eigen::Index>(cols()));
  }
  Eigen::Map<const Mat> map() const {
    return Eigen::Map<const Mat>(data_.data(), static_cast<Eigen::Index>(rows()),
                                 static_cast<Eigen::Index>(cols()));
  }

  Eigen::Map<Vec> vec() { return Eigen::Map<Vec>(data_.data(), static_cast<Eigen::Index>(size())); }
  Eigen::Map<const Vec> vec() const {
    return Eigen::Map<const Vec>(data_.data(), static_cast<Eigen::Index>(size()));
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  static std::size_t flat_size(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Named trainable parameters with insertion-ordered, deterministic
// iteration.  Gradients live alongside values and are filled by
// Graph::backward.
class ParameterSet {
 public:
  int add(const std::string& name, Tensor value) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    int id = static_cast<int>(entries_.size());
    Tensor grad(value.shape());
    entries_.push_back(Entry{name, std::move(value), std::move(grad)});
    index_[name] = id;
    return id;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  int index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }

  std::size_t count() const { return entries_.size(); }

  const std::string& name(int id) const { return entries_.at(static_cast<std::size_t>(id)).name; }
  Tensor& value(int id) { return entries_.at(static_cast<std::size_t>(id)).value; }
  const Tensor& value(int id) const { return entries_.at(static_cast<std::size_t>(id)).value; }
  Tensor& value(const std::string& name) { return value(index_of(name)); }
  const Tensor& value(const std::string& name) const { return value(index_of(name)); }
  Tensor& grad(int id) { return entries_.at(static_cast<std::size_t>(id)).grad; }
  const Tensor& grad(int id) const { return entries_.at(static_cast<std::size_t>(id)).grad; }
  Tensor& grad(const std::string& name) { return grad(index_of(name)); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  void zero_grads() {
    for (auto& e : entries_) e.grad.fill(0.0);
  }

 private:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace pvad::nn
