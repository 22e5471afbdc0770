#pragma once

// Row-major 2-D tensor. Sequence feature maps are stored channel-major:
// rows are channels, columns are sequence positions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "trace/error.hpp"

namespace trace {

template <class Real>
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, Real fill = Real(0)) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<Real> values) : rows_(rows), cols_(cols), data_(std::move(values)) {
    require(data_.size() == rows * cols, ErrorCategory::kShapeMismatch, "tensor data size does not match shape");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t channels() const { return rows_; }
  std::size_t length() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }
  std::span<Real> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }
  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
  }

  template <class Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(rows_, cols_, std::vector<Other>(data_.begin(), data_.end()));
  }

  std::string shape_string() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

template <class Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, std::string_view what) {
  if (!a.same_shape(b)) {
    fail(ErrorCategory::kShapeMismatch, std::string(what) + ": " + a.shape_string() + " vs " + b.shape_string());
  }
}

}  // namespace trace
