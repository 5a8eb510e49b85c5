#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>

#include "spdgan/errors.hpp"
#include "spdgan/rng.hpp"

namespace spdgan {

/// Dimensions of a batch x channels x height x width array.
struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool valid() const { return n > 0 && c > 0 && h > 0 && w > 0; }
  bool operator==(const Shape4&) const = default;
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

/// Dense NCHW activation array. Storage is a flat Eigen array so whole-tensor
/// arithmetic can be written as Eigen expressions.
template <typename Scalar>
class Tensor4 {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor4() = default;

  explicit Tensor4(const Shape4& shape, Scalar fill = Scalar(0)) : shape_(shape) {
    if (!shape.valid())
      throw DimensionError("tensor dimensions must be positive, got " + shape.str());
    data_ = Array::Constant(static_cast<Eigen::Index>(shape.size()), fill);
  }

  Tensor4(const Shape4& shape, Array data) : shape_(shape), data_(std::move(data)) {
    if (!shape.valid())
      throw DimensionError("tensor dimensions must be positive, got " + shape.str());
    if (static_cast<std::size_t>(data_.size()) != shape.size())
      throw DimensionError("tensor data size does not match shape " + shape.str());
  }

  static Tensor4 zeros(const Shape4& shape) { return Tensor4(shape); }

  static Tensor4 randn(const Shape4& shape, Rng& rng, double stddev = 1.0) {
    Tensor4 t(shape);
    for (Eigen::Index i = 0; i < t.data_.size(); ++i)
      t.data_[i] = static_cast<Scalar>(rng.normal() * stddev);
    return t;
  }

  static Tensor4 uniform(const Shape4& shape, Rng& rng, double lo, double hi) {
    Tensor4 t(shape);
    for (Eigen::Index i = 0; i < t.data_.size(); ++i)
      t.data_[i] = static_cast<Scalar>(rng.uniform(lo, hi));
    return t;
  }

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return shape_.size(); }
  bool empty() const { return data_.size() == 0; }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  Scalar& operator()(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  Scalar operator()(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }
  Scalar& operator[](std::size_t i) { return data_[static_cast<Eigen::Index>(i)]; }
  Scalar operator[](std::size_t i) const { return data_[static_cast<Eigen::Index>(i)]; }

  /// Pointer to the contiguous H*W plane of sample n, channel c.
  Scalar* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const Scalar* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

  /// View of sample n's channel c as an H x W row-major matrix.
  auto matrix(int n, int c) {
    return Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        plane(n, c), shape_.h, shape_.w);
  }
  auto matrix(int n, int c) const {
    return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        plane(n, c), shape_.h, shape_.w);
  }

  template <typename Other>
  Tensor4<Other> cast() const {
    return Tensor4<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.allFinite(); }

  Tensor4 reshaped(const Shape4& shape) const {
    if (shape.size() != shape_.size())
      throw DimensionError("cannot reshape " + shape_.str() + " to " + shape.str());
    return Tensor4(shape, data_);
  }

 private:
  Shape4 shape_;
  Array data_;
};

template <typename Scalar>
void require_same_shape(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
}

}  // namespace spdgan
