/* Copyright 2026 The segbert Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "segbert/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "segbert/error.hpp"

namespace segbert {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : Tensor(std::vector<std::size_t>{rows, cols}, fill) {}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  require(values.size() == rows * cols, Errc::dimension,
          "matrix payload does not match " + std::to_string(rows) + "x" +
              std::to_string(cols));
  Tensor t;
  t.shape_ = {rows, cols};
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    require(row.size() == c, Errc::dimension, "ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return matrix(r, c, std::move(values));
}

Tensor Tensor::row_vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return matrix(1, n, std::move(values));
}

Tensor Tensor::scalar(double value) { return matrix(1, 1, {value}); }

std::size_t Tensor::rows() const noexcept {
  if (shape_.empty()) return 0;
  if (shape_.size() == 1) return 1;
  return shape_[0];
}

std::size_t Tensor::cols() const noexcept {
  if (shape_.empty()) return 0;
  if (shape_.size() == 1) return shape_[0];
  std::size_t n = 1;
  for (std::size_t k = 1; k < shape_.size(); ++k) n *= shape_[k];
  return n;
}

std::span<double> Tensor::row(std::size_t r) {
  return std::span<double>(data_).subspan(r * cols(), cols());
}

std::span<const double> Tensor::row(std::size_t r) const {
  return std::span<const double>(data_).subspan(r * cols(), cols());
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  require(begin <= end && end <= rows(), Errc::bounds,
          "row slice [" + std::to_string(begin) + ", " + std::to_string(end) +
              ") outside " + shape_string());
  const std::size_t c = cols();
  return matrix(end - begin, c,
                std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * c),
                                    data_.begin() + static_cast<std::ptrdiff_t>(end * c)));
}

void Tensor::append_row(std::span<const double> values) {
  if (shape_.empty()) shape_ = {0, values.size()};
  require(rank() == 2 && values.size() == cols(), Errc::dimension,
          "append_row width mismatch on " + shape_string());
  data_.insert(data_.end(), values.begin(), values.end());
  ++shape_[0];
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::min() const {
  require(!data_.empty(), Errc::empty_input, "min of empty tensor");
  return *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
  require(!data_.empty(), Errc::empty_input, "max of empty tensor");
  return *std::max_element(data_.begin(), data_.end());
}

std::string Tensor::shape_string() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

Tensor vstack(std::span<const Tensor> parts) {
  require(!parts.empty(), Errc::empty_input, "vstack of nothing");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  std::vector<double> values;
  for (const auto& p : parts) {
    require(p.cols() == c, Errc::dimension, "vstack width mismatch");
    r += p.rows();
    values.insert(values.end(), p.values().begin(), p.values().end());
  }
  return Tensor::matrix(r, c, std::move(values));
}

}  // namespace segbert
