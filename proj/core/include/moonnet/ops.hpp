#pragma once

// Differentiable operators over Tensor<T>. Each forward has a matching
// *_backward that maps the gradient of the output back to the inputs it
// depends on. Composite modules call these in reverse order of their forward.
//
// Parameter layouts:
//   matrix (out x in)    -> Tensor shape (out, in, 1, 1)
//   vector (len)         -> Tensor shape (len, 1, 1, 1)
//   conv kernel          -> Tensor shape (c_out, c_in, k, k)

#include <cstddef>
#include <utility>
#include <vector>

#include "moonnet/tensor.hpp"

namespace moonnet {

inline Shape vector_shape(int len) { return Shape{len, 1, 1, 1}; }
inline Shape matrix_shape(int rows, int cols) { return Shape{rows, cols, 1, 1}; }

/// Output of a max reduction plus, for every output element, the flat input
/// index that produced it (first maximum in row-major scan order).
template <typename T>
struct MaxReduction {
  Tensor<T> out;
  std::vector<std::size_t> argmax;
  /// Smallest gap between the winner and the runner-up over all outputs;
  /// +inf when every reduction has a single candidate.
  double min_gap = 0.0;
};

template <typename T> Tensor<T> global_avg_pool(const Tensor<T>& x);
template <typename T> Tensor<T> global_avg_pool_backward(const Tensor<T>& grad_out, const Shape& in);

template <typename T> MaxReduction<T> global_max_pool(const Tensor<T>& x);
template <typename T> Tensor<T> channel_reduce_avg(const Tensor<T>& x);
template <typename T> Tensor<T> channel_reduce_avg_backward(const Tensor<T>& grad_out, const Shape& in);
template <typename T> MaxReduction<T> channel_reduce_max(const Tensor<T>& x);
/// Backward for both max reductions: routes each output gradient to its argmax.
template <typename T>
Tensor<T> max_reduction_backward(const Tensor<T>& grad_out,
                                 const std::vector<std::size_t>& argmax, const Shape& in);

template <typename T>
struct FcGrads {
  Tensor<T> dx, dweight, dbias;
};
/// out[n,j] = sum_i W[j,i] x[n,i] + b[j] on (n, in, 1, 1) channel vectors.
template <typename T>
Tensor<T> fc(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);
template <typename T>
FcGrads<T> fc_backward(const Tensor<T>& grad_out, const Tensor<T>& x, const Tensor<T>& weight);

struct ConvGeometry {
  int stride = 1;
  int pad = 0;
};
template <typename T>
struct ConvGrads {
  Tensor<T> dx, dkernel, dbias;
};
/// Zero-padded cross-correlation. Output size floor((h + 2 pad - k) / stride) + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 ConvGeometry geom);
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& x,
                             const Tensor<T>& kernel, ConvGeometry geom);

template <typename T> Tensor<T> relu(const Tensor<T>& x);
/// Subgradient at 0 is 0.
template <typename T> Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid_backward(const Tensor<T>& grad_out, const Tensor<T>& y);
template <typename T> Tensor<T> tanh_act(const Tensor<T>& x);
template <typename T> Tensor<T> tanh_backward(const Tensor<T>& grad_out, const Tensor<T>& y);
template <typename T> Tensor<T> silu(const Tensor<T>& x);
template <typename T> Tensor<T> silu_backward(const Tensor<T>& grad_out, const Tensor<T>& x);

/// x * g where g is either (n, c, 1, 1) or (n, 1, h, w).
template <typename T> Tensor<T> broadcast_mul(const Tensor<T>& x, const Tensor<T>& g);
template <typename T>
struct BroadcastGrads {
  Tensor<T> dx, dg;
};
template <typename T>
BroadcastGrads<T> broadcast_mul_backward(const Tensor<T>& grad_out, const Tensor<T>& x,
                                         const Tensor<T>& g);

template <typename T> Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
/// Splits into channels [0, at) and [at, c).
template <typename T> std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int at);
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> void add_inplace(Tensor<T>& acc, const Tensor<T>& b);

template <typename T>
struct BatchNormCache {
  Tensor<T> x_hat;
  std::vector<T> inv_std;
};
template <typename T>
struct BatchNormGrads {
  Tensor<T> dx, dgamma, dbeta;
};
/// Normalizes with per-channel batch statistics. The biased batch mean and
/// variance are written to `mean` / `var` for running-stat updates.
template <typename T>
Tensor<T> batchnorm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          T eps, BatchNormCache<T>* cache, std::vector<T>* mean,
                          std::vector<T>* var);
template <typename T>
Tensor<T> batchnorm_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                         const Tensor<T>& running_mean, const Tensor<T>& running_var, T eps);
template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& grad_out, const BatchNormCache<T>& cache,
                                     const Tensor<T>& gamma);

/// Mean binary cross-entropy with logits; returns the loss and writes
/// d(loss)/d(logits) into `grad` when non-null.
template <typename T>
T bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets, Tensor<T>* grad);

}  // namespace moonnet
