/*
 * Copyright 2026 The LSTR Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lstr {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with explicit shape metadata.
///
/// There is no broadcasting; every operation that combines tensors checks
/// shapes and throws DimensionError on disagreement.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(const Shape& shape) { return Tensor(shape); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Multi-index access; index count must equal rank (checked in debug builds).
  template <typename... Idx>
  double& operator()(Idx... idx) {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <typename... Idx>
  double operator()(Idx... idx) const {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  Tensor reshaped(Shape shape) const;
  void fill(double value);
  void add(const Tensor& other);            // this += other
  void add_scaled(double alpha, const Tensor& other);  // this += alpha * other
  void scale(double alpha);
  double sum() const;

  bool all_finite() const;
  // Throws NumericError naming `context` when any entry is NaN/Inf.
  void require_finite(const std::string& context) const;

 private:
  std::size_t offset(std::initializer_list<std::size_t> idx) const;

  Shape shape_;
  std::vector<double> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& context);

}  // namespace lstr
