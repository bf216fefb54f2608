#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "moonnet/errors.hpp"

namespace moonnet {

/// Dimensions of a rank-4 tensor in N, C, H, W order. Every dimension is >= 1.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  Shape() = default;
  Shape(int n_, int c_, int h_, int w_);

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense row-major N,C,H,W array.
///
/// Gradients are kept next to the values they belong to by `Param`, not
/// inside the tensor; operators return plain value tensors.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : Tensor(Shape{}) {}
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) *
               shape_.w + w;
  }
  T& operator()(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  const T& operator()(int n, int c, int h, int w) const {
    return data_[offset(n, c, h, w)];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Pointer to the H*W plane of (n, c).
  T* plane(int n, int c) { return data_.data() + offset(n, c, 0, 0); }
  const T* plane(int n, int c) const { return data_.data() + offset(n, c, 0, 0); }

  void fill(T v);
  bool all_finite() const;

  /// Element-wise conversion to another scalar type.
  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// (n, c, 1, 1) per-channel statistics or logits.
template <typename T>
bool is_channel_vector(const Tensor<T>& t) {
  return t.shape().h == 1 && t.shape().w == 1;
}

/// (n, 1, h, w) per-location logits.
template <typename T>
bool is_spatial_map(const Tensor<T>& t) {
  return t.shape().c == 1;
}

extern template class Tensor<float>;
extern template class Tensor<double>;

using Tensor4 = Tensor<float>;

}  // namespace moonnet
