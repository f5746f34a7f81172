#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "canvoi/core/error.hpp"

namespace canvoi::nn {

// Dense row-major matrix. Vectors are stored as 1 x n.
template <class T>
class Tensor2D {
 public:
  using value_type = T;

  Tensor2D() = default;
  Tensor2D(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor2D(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols)
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string());
  }
  Tensor2D(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("ragged tensor literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Tensor2D row_vector(std::vector<T> v) {
    const auto n = v.size();
    return Tensor2D(1, n, std::move(v));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const Tensor2D& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  std::string shape_string() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
  }

  friend bool operator==(const Tensor2D&, const Tensor2D&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

// batch x tokens x dim, contiguous.
template <class T>
class Tensor3D {
 public:
  Tensor3D() = default;
  Tensor3D(std::size_t batch, std::size_t tokens, std::size_t dim, T fill = T(0))
      : batch_(batch), tokens_(tokens), dim_(dim), data_(batch * tokens * dim, fill) {}

  std::size_t batch() const { return batch_; }
  std::size_t tokens() const { return tokens_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t b, std::size_t t, std::size_t d) {
    return data_[(b * tokens_ + t) * dim_ + d];
  }
  const T& operator()(std::size_t b, std::size_t t, std::size_t d) const {
    return data_[(b * tokens_ + t) * dim_ + d];
  }

  Tensor2D<T> sample(std::size_t b) const {
    const auto n = tokens_ * dim_;
    return Tensor2D<T>(tokens_, dim_,
                       std::vector<T>(data_.begin() + static_cast<std::ptrdiff_t>(b * n),
                                      data_.begin() + static_cast<std::ptrdiff_t>((b + 1) * n)));
  }

  void set_sample(std::size_t b, const Tensor2D<T>& m) {
    if (m.rows() != tokens_ || m.cols() != dim_)
      throw DimensionError("sample shape " + m.shape_string() + " vs tokens x dim [" +
                           std::to_string(tokens_) + "x" + std::to_string(dim_) + "]");
    std::copy(m.flat().begin(), m.flat().end(),
              data_.begin() + static_cast<std::ptrdiff_t>(b * tokens_ * dim_));
  }

  std::span<const T> flat() const { return data_; }

  friend bool operator==(const Tensor3D&, const Tensor3D&) = default;

 private:
  std::size_t batch_ = 0, tokens_ = 0, dim_ = 0;
  std::vector<T> data_;
};

template <class T>
Tensor2D<T> transpose(const Tensor2D<T>& a) {
  Tensor2D<T> t(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
  return t;
}

template <class To, class From>
Tensor2D<To> cast(const Tensor2D<From>& a) {
  std::vector<To> v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[i] = static_cast<To>(a[i]);
  return Tensor2D<To>(a.rows(), a.cols(), std::move(v));
}

}  // namespace canvoi::nn
