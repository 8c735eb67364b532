#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

#include "interpgaze/core/error.hpp"

namespace interpgaze {

/// NCHW extents of a batched activation.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  Eigen::Index count() const { return Eigen::Index(n) * c * h * w; }
  Eigen::Index per_sample() const { return Eigen::Index(c) * h * w; }
  Eigen::Index plane() const { return Eigen::Index(h) * w; }
  Shape with_batch(int batch) const { return {batch, c, h, w}; }

  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + "]";
  }
};

/// Dense batched activation stored contiguously in NCHW order.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using PlaneMatrix =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Tensor() = default;
  explicit Tensor(const Shape& shape) : shape_(shape), data_(Array::Zero(shape.count())) {}
  Tensor(const Shape& shape, Array data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.count())
      throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
  }

  static Tensor zeros(const Shape& shape) { return Tensor(shape); }
  static Tensor constant(const Shape& shape, Scalar value) {
    return Tensor(shape, Array::Constant(shape.count(), value));
  }

  const Shape& shape() const { return shape_; }
  int batch() const { return shape_.n; }
  bool empty() const { return shape_.count() == 0; }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar* sample_data(int i) { return data_.data() + i * shape_.per_sample(); }
  const Scalar* sample_data(int i) const { return data_.data() + i * shape_.per_sample(); }

  /// Sample `i` viewed as a (channels x pixels) row-major matrix.
  Eigen::Map<PlaneMatrix> planes(int i) {
    return {sample_data(i), shape_.c, shape_.plane()};
  }
  Eigen::Map<const PlaneMatrix> planes(int i) const {
    return {sample_data(i), shape_.c, shape_.plane()};
  }

  /// Sample `i` as a flat segment of length c*h*w.
  auto sample(int i) { return data_.segment(i * shape_.per_sample(), shape_.per_sample()); }
  auto sample(int i) const {
    return data_.segment(i * shape_.per_sample(), shape_.per_sample());
  }

  Scalar& at(int n, int c, int y, int x) {
    return data_[((Eigen::Index(n) * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  Scalar at(int n, int c, int y, int x) const {
    return data_[((Eigen::Index(n) * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.isFinite().all(); }

  Tensor& operator+=(const Tensor& rhs) {
    require_same(rhs, "+=");
    data_ += rhs.data_;
    return *this;
  }
  Tensor& operator-=(const Tensor& rhs) {
    require_same(rhs, "-=");
    data_ -= rhs.data_;
    return *this;
  }
  Tensor& operator*=(Scalar s) {
    data_ *= s;
    return *this;
  }
  friend Tensor operator+(Tensor lhs, const Tensor& rhs) { return lhs += rhs; }
  friend Tensor operator-(Tensor lhs, const Tensor& rhs) { return lhs -= rhs; }
  friend Tensor operator*(Tensor lhs, Scalar s) { return lhs *= s; }
  friend Tensor operator*(Scalar s, Tensor rhs) { return rhs *= s; }

  void require_same(const Tensor& rhs, const char* op) const {
    if (!(shape_ == rhs.shape_))
      throw ShapeError(std::string("tensor ") + op + ": shape " + shape_.str() +
                       " vs " + rhs.shape_.str());
  }

 private:
  Shape shape_;
  Array data_;
};

/// Adds `rhs` into `acc`, adopting rhs when acc is still empty.
template <typename Scalar>
void accumulate(Tensor<Scalar>& acc, const Tensor<Scalar>& rhs) {
  if (acc.empty())
    acc = rhs;
  else
    acc += rhs;
}

/// Concatenates tensors along the batch axis.
template <typename Scalar>
Tensor<Scalar> concat_batch(const std::vector<const Tensor<Scalar>*>& parts) {
  if (parts.empty()) return {};
  Shape shape = parts.front()->shape();
  int total = 0;
  for (const auto* p : parts) {
    if (p->shape().with_batch(0) != shape.with_batch(0))
      throw ShapeError("concat_batch: mismatched sample shape " + p->shape().str());
    total += p->batch();
  }
  Tensor<Scalar> out(shape.with_batch(total));
  Eigen::Index offset = 0;
  for (const auto* p : parts) {
    out.array().segment(offset, p->array().size()) = p->array();
    offset += p->array().size();
  }
  return out;
}

/// Copies samples [first, first+count) into a new tensor.
template <typename Scalar>
Tensor<Scalar> slice_batch(const Tensor<Scalar>& t, int first, int count) {
  const Shape s = t.shape();
  if (first < 0 || count < 0 || first + count > s.n)
    throw ShapeError("slice_batch out of range for " + s.str());
  Tensor<Scalar> out(s.with_batch(count));
  out.array() = t.array().segment(first * s.per_sample(), count * s.per_sample());
  return out;
}

/// Per-sample Euclidean norm.
template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> sample_norms(const Tensor<Scalar>& t) {
  Eigen::Array<Scalar, Eigen::Dynamic, 1> norms(t.batch());
  for (int i = 0; i < t.batch(); ++i) norms[i] = t.sample(i).matrix().norm();
  return norms;
}

}  // namespace interpgaze
