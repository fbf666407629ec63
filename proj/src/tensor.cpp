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

#include "lstr/tensor.hpp"

#include <cassert>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lstr/error.hpp"

namespace lstr {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw DimensionError("tensor: zero-length axis in shape " + shape_string(shape_));
  }
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw DimensionError("tensor: zero-length axis in shape " + shape_string(shape_));
  }
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("tensor: shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("tensor: axis " + std::to_string(axis) + " out of range for " +
                         shape_string(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> idx) const {
  assert(idx.size() == shape_.size());
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : idx) {
    assert(i < shape_[axis]);
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("reshape: " + shape_string(shape_) + " -> " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor::add(const Tensor& other) { add_scaled(1.0, other); }

void Tensor::add_scaled(double alpha, const Tensor& other) {
  require_same_shape(*this, other, "add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += alpha * other.data_[i];
}

void Tensor::scale(double alpha) {
  for (double& v : data_) v *= alpha;
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::require_finite(const std::string& context) const {
  if (!all_finite()) throw NumericError(context + ": non-finite value");
}

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& context) {
  if (a.shape() != b.shape()) {
    throw DimensionError(context + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace lstr
