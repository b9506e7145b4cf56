// Copyright 2026 The gdnorm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gdnorm/tensor.hpp"

#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "gdnorm/errors.hpp"

namespace gdnorm {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_numel(shape_) != values_.size()) {
    throw DimensionError("tensor shape " + shape_str(shape_) + " holds " +
                         std::to_string(shape_numel(shape_)) +
                         " values, got " + std::to_string(values_.size()));
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, {v}); }

std::size_t Tensor::rows() const {
  if (shape_.size() != 2) {
    throw DimensionError("expected a matrix, got shape " + shape_str(shape_));
  }
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() != 2) {
    throw DimensionError("expected a matrix, got shape " + shape_str(shape_));
  }
  return shape_[1];
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw ContractError("item() on a tensor of shape " + shape_str(shape_));
  }
  return values_[0];
}

void Tensor::set_trainable(bool on) {
  trainable_ = on;
  if (!on) grad_.reset();
}

std::span<double> Tensor::grad() {
  if (!grad_) throw ContractError("tensor has no gradient");
  return *grad_;
}

std::span<const double> Tensor::grad() const {
  if (!grad_) throw ContractError("tensor has no gradient");
  return *grad_;
}

void Tensor::accumulate_grad(std::span<const double> contribution) {
  if (contribution.size() != values_.size()) {
    throw DimensionError("gradient length mismatch");
  }
  if (!grad_) grad_.emplace(values_.size(), 0.0);
  for (std::size_t i = 0; i < contribution.size(); ++i) {
    (*grad_)[i] += contribution[i];
  }
}

bool Tensor::all_finite() const noexcept {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::same_values(const Tensor& other) const noexcept {
  return shape_ == other.shape_ &&
         (values_.empty() ||
          std::memcmp(values_.data(), other.values_.data(),
                      values_.size() * sizeof(double)) == 0);
}

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Contract: return "contract";
    case ErrorCode::Dimension: return "dimension";
    case ErrorCode::Index: return "index";
    case ErrorCode::DegenerateBatch: return "degenerate-batch";
    case ErrorCode::DegenerateEstimate: return "degenerate-estimate";
    case ErrorCode::Numeric: return "numeric";
    case ErrorCode::Protocol: return "protocol";
    case ErrorCode::Io: return "io";
    case ErrorCode::Config: return "config";
    case ErrorCode::Checkpoint: return "checkpoint";
  }
  return "unknown";
}

}  // namespace gdnorm
