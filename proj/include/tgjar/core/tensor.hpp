// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tgjar/core/error.hpp"

namespace tgjar {

using Shape = std::vector<std::size_t>;

// Cache-line aligned allocation. Eigen picks its vectorized code paths from
// pointer alignment, so a fixed alignment keeps float results reproducible
// from run to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <class T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major array with a dynamic shape. Images are stored planar as
// (C, H, W); network activations as (N, C, H, W).
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
    for (std::size_t d : shape_) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_str(shape_));
    }
  }
  Tensor(Shape shape, const std::vector<T>& data) : Tensor(std::move(shape), Buffer<T>(data.begin(), data.end())) {}
  Tensor(Shape shape, Buffer<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  Buffer<T>& storage() { return data_; }
  const Buffer<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // (C, H, W) accessor.
  T& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  const T& at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  // Same storage, new shape with equal element count.
  Tensor reshaped(Shape shape) const& {
    Tensor t = *this;
    t.reshape(std::move(shape));
    return t;
  }
  Tensor reshaped(Shape shape) && {
    reshape(std::move(shape));
    return std::move(*this);
  }
  void reshape(Shape shape) {
    if (shape_numel(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    shape_ = std::move(shape);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, Buffer<U>(data_.begin(), data_.end()));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  Buffer<T> data_;
};

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " +
                     shape_str(b));
  }
}

// Planar RGB image, values in [0,1].
template <class T>
using Image = Tensor<T>;

template <class T>
void validate_image(const Tensor<T>& img, std::size_t multiple = 16) {
  if (img.rank() != 3 || img.dim(0) != 3) {
    throw ShapeError("image must be 3xHxW, got " + shape_str(img.shape()));
  }
  if (img.dim(1) % multiple != 0 || img.dim(2) % multiple != 0) {
    throw ShapeError("image height and width must be divisible by " + std::to_string(multiple) +
                     ", got " + shape_str(img.shape()));
  }
  for (T v : img.values()) {
    if (!std::isfinite(v) || v < T(0) || v > T(1)) {
      throw DomainError("image values must be finite and within [0,1]");
    }
  }
}

}  // namespace tgjar
