#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "moonnet/tensor.hpp"

namespace moonnet {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a base seed and a stream label, so
/// that e.g. a conv layer named "stage2.conv" gets the same weights no matter
/// which other layers exist in the network.
std::uint64_t mix_seed(std::uint64_t seed, std::string_view stream);
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

/// Draws are always taken in double precision and then narrowed, so float and
/// double tensors filled from equal seeds agree up to rounding.
template <typename T>
void fill_uniform(Tensor<T>& t, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(shape);
  fill_uniform(t, lo, hi, rng);
  return t;
}

}  // namespace moonnet
