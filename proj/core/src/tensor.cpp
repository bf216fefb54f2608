#include "moonnet/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace moonnet {

Shape::Shape(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {
  if (n < 1 || c < 1 || h < 1 || w < 1) {
    throw ShapeError("tensor dimensions must be >= 1, got " + str());
  }
}

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
         std::to_string(h) + "," + std::to_string(w) + ")";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(shape), data_(shape.numel(), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("value count " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.str());
  }
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace moonnet
