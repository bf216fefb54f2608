#include "moonnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace moonnet {

namespace {

template <typename T>
T sigmoid_scalar(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

void require_same(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

template <typename T>
void check_vector(const Tensor<T>& v, int len, const char* what) {
  if (v.shape() != vector_shape(len)) {
    throw ShapeError(std::string(what) + ": expected vector of length " +
                     std::to_string(len) + ", got " + v.shape().str());
  }
}

template <typename T>
Tensor<T> map(const Tensor<T>& x, auto fn) {
  Tensor<T> out(x.shape());
  const T* src = x.data();
  T* dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = fn(src[i]);
  return out;
}

template <typename T>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, auto fn, const char* what) {
  require_same(a.shape(), b.shape(), what);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i], b[i]);
  return out;
}

struct ConvDims {
  int c_in, c_out, k, h_out, w_out;
};

template <typename T>
ConvDims conv_dims(const Shape& x, const Shape& kernel, ConvGeometry g) {
  if (kernel.c != x.c) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.c) +
                     " input channels, input has " + std::to_string(x.c));
  }
  if (kernel.h != kernel.w || kernel.h % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd size, got " + kernel.str());
  }
  if (g.stride < 1 || g.pad < 0) {
    throw ShapeError("conv2d: stride must be >= 1 and pad >= 0");
  }
  const int k = kernel.h;
  const int h_span = x.h + 2 * g.pad - k;
  const int w_span = x.w + 2 * g.pad - k;
  if (h_span < 0 || w_span < 0) {
    throw ShapeError("conv2d: non-positive output size for input " + x.str() +
                     " and kernel " + kernel.str());
  }
  return {x.c, kernel.n, k, h_span / g.stride + 1, w_span / g.stride + 1};
}

// cols[(ci*k + ki)*k + kj][oh*w_out + ow] for sample n.
template <typename T>
void im2col(const Tensor<T>& x, int n, const ConvDims& d, ConvGeometry g, std::vector<T>& cols) {
  const int plane_out = d.h_out * d.w_out;
  const int H = x.shape().h;
  const int W = x.shape().w;
  cols.assign(static_cast<std::size_t>(d.c_in) * d.k * d.k * plane_out, T(0));
  for (int ci = 0; ci < d.c_in; ++ci) {
    const T* src = x.plane(n, ci);
    for (int ki = 0; ki < d.k; ++ki) {
      for (int kj = 0; kj < d.k; ++kj) {
        T* row = cols.data() + (static_cast<std::size_t>(ci * d.k + ki) * d.k + kj) * plane_out;
        for (int oh = 0; oh < d.h_out; ++oh) {
          const int ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= H) continue;
          for (int ow = 0; ow < d.w_out; ++ow) {
            const int iw = ow * g.stride - g.pad + kj;
            if (iw >= 0 && iw < W) row[oh * d.w_out + ow] = src[ih * W + iw];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const std::vector<T>& cols, int n, const ConvDims& d, ConvGeometry g,
                Tensor<T>& dx) {
  const int plane_out = d.h_out * d.w_out;
  const int H = dx.shape().h;
  const int W = dx.shape().w;
  for (int ci = 0; ci < d.c_in; ++ci) {
    T* dst = dx.plane(n, ci);
    for (int ki = 0; ki < d.k; ++ki) {
      for (int kj = 0; kj < d.k; ++kj) {
        const T* row =
            cols.data() + (static_cast<std::size_t>(ci * d.k + ki) * d.k + kj) * plane_out;
        for (int oh = 0; oh < d.h_out; ++oh) {
          const int ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= H) continue;
          for (int ow = 0; ow < d.w_out; ++ow) {
            const int iw = ow * g.stride - g.pad + kj;
            if (iw >= 0 && iw < W) dst[ih * W + iw] += row[oh * d.w_out + ow];
          }
        }
      }
    }
  }
}

}  // namespace

// --- pooling -----------------------------------------------------------------

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const Shape& s = x.shape();
  Tensor<T> out(Shape{s.n, s.c, 1, 1});
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.plane(n, c);
      T sum = 0;
      for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      out(n, c, 0, 0) = sum / static_cast<T>(plane);
    }
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& grad_out, const Shape& in) {
  require_same(grad_out.shape(), Shape{in.n, in.c, 1, 1}, "global_avg_pool_backward");
  Tensor<T> dx(in);
  const std::size_t plane = in.plane();
  for (int n = 0; n < in.n; ++n) {
    for (int c = 0; c < in.c; ++c) {
      const T g = grad_out(n, c, 0, 0) / static_cast<T>(plane);
      std::fill_n(dx.plane(n, c), plane, g);
    }
  }
  return dx;
}

template <typename T>
MaxReduction<T> global_max_pool(const Tensor<T>& x) {
  const Shape& s = x.shape();
  MaxReduction<T> r{Tensor<T>(Shape{s.n, s.c, 1, 1}), {}, std::numeric_limits<double>::infinity()};
  r.argmax.resize(static_cast<std::size_t>(s.n) * s.c);
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.plane(n, c);
      std::size_t best = 0;
      T second = -std::numeric_limits<T>::infinity();
      for (std::size_t i = 1; i < plane; ++i) {
        if (p[i] > p[best]) {
          second = p[best];
          best = i;
        } else if (p[i] > second) {
          second = p[i];
        }
      }
      r.out(n, c, 0, 0) = p[best];
      r.argmax[static_cast<std::size_t>(n) * s.c + c] = x.offset(n, c, 0, 0) + best;
      if (plane > 1) r.min_gap = std::min(r.min_gap, static_cast<double>(p[best] - second));
    }
  }
  return r;
}

template <typename T>
Tensor<T> channel_reduce_avg(const Tensor<T>& x) {
  const Shape& s = x.shape();
  Tensor<T> out(Shape{s.n, 1, s.h, s.w});
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    T* dst = out.plane(n, 0);
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] += p[i];
    }
    for (std::size_t i = 0; i < plane; ++i) dst[i] /= static_cast<T>(s.c);
  }
  return out;
}

template <typename T>
Tensor<T> channel_reduce_avg_backward(const Tensor<T>& grad_out, const Shape& in) {
  require_same(grad_out.shape(), Shape{in.n, 1, in.h, in.w}, "channel_reduce_avg_backward");
  Tensor<T> dx(in);
  const std::size_t plane = in.plane();
  for (int n = 0; n < in.n; ++n) {
    const T* g = grad_out.plane(n, 0);
    for (int c = 0; c < in.c; ++c) {
      T* d = dx.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) d[i] = g[i] / static_cast<T>(in.c);
    }
  }
  return dx;
}

template <typename T>
MaxReduction<T> channel_reduce_max(const Tensor<T>& x) {
  const Shape& s = x.shape();
  MaxReduction<T> r{Tensor<T>(Shape{s.n, 1, s.h, s.w}), {}, std::numeric_limits<double>::infinity()};
  r.argmax.resize(static_cast<std::size_t>(s.n) * s.plane());
  for (int n = 0; n < s.n; ++n) {
    for (int h = 0; h < s.h; ++h) {
      for (int w = 0; w < s.w; ++w) {
        int best = 0;
        T second = -std::numeric_limits<T>::infinity();
        for (int c = 1; c < s.c; ++c) {
          const T v = x(n, c, h, w);
          if (v > x(n, best, h, w)) {
            second = x(n, best, h, w);
            best = c;
          } else if (v > second) {
            second = v;
          }
        }
        const T top = x(n, best, h, w);
        r.out(n, 0, h, w) = top;
        r.argmax[r.out.offset(n, 0, h, w)] = x.offset(n, best, h, w);
        if (s.c > 1) r.min_gap = std::min(r.min_gap, static_cast<double>(top - second));
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> max_reduction_backward(const Tensor<T>& grad_out, const std::vector<std::size_t>& argmax,
                                 const Shape& in) {
  if (argmax.size() != grad_out.size()) {
    throw ShapeError("max_reduction_backward: argmax/gradient size mismatch");
  }
  Tensor<T> dx(in);
  for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += grad_out[i];
  return dx;
}

// --- fully connected ---------------------------------------------------------

template <typename T>
Tensor<T> fc(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const int out_dim = weight.shape().n;
  const int in_dim = weight.shape().c;
  if (!is_channel_vector(x)) throw ShapeError("fc: input must be (n, c, 1, 1), got " + x.shape().str());
  if (weight.shape().h != 1 || weight.shape().w != 1) throw ShapeError("fc: weight must be a matrix");
  if (x.shape().c != in_dim) {
    throw ShapeError("fc: weight expects " + std::to_string(in_dim) + " inputs, got " +
                     std::to_string(x.shape().c));
  }
  check_vector(bias, out_dim, "fc bias");
  const int batch = x.shape().n;
  Tensor<T> out(Shape{batch, out_dim, 1, 1});
  for (int n = 0; n < batch; ++n) {
    const T* xin = x.plane(n, 0);
    for (int j = 0; j < out_dim; ++j) {
      const T* wrow = weight.data() + static_cast<std::size_t>(j) * in_dim;
      T acc = 0;
      for (int i = 0; i < in_dim; ++i) acc += wrow[i] * xin[i];
      out(n, j, 0, 0) = acc + bias[j];
    }
  }
  return out;
}

template <typename T>
FcGrads<T> fc_backward(const Tensor<T>& grad_out, const Tensor<T>& x, const Tensor<T>& weight) {
  const int out_dim = weight.shape().n;
  const int in_dim = weight.shape().c;
  const int batch = x.shape().n;
  require_same(grad_out.shape(), Shape{batch, out_dim, 1, 1}, "fc_backward");
  FcGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weight.shape()), Tensor<T>(vector_shape(out_dim))};
  for (int n = 0; n < batch; ++n) {
    const T* xin = x.plane(n, 0);
    T* dx = g.dx.plane(n, 0);
    for (int j = 0; j < out_dim; ++j) {
      const T go = grad_out(n, j, 0, 0);
      g.dbias[j] += go;
      const T* wrow = weight.data() + static_cast<std::size_t>(j) * in_dim;
      T* dwrow = g.dweight.data() + static_cast<std::size_t>(j) * in_dim;
      for (int i = 0; i < in_dim; ++i) {
        dwrow[i] += go * xin[i];
        dx[i] += go * wrow[i];
      }
    }
  }
  return g;
}

// --- convolution -------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 ConvGeometry geom) {
  const ConvDims d = conv_dims<T>(x.shape(), kernel.shape(), geom);
  check_vector(bias, d.c_out, "conv2d bias");
  const int batch = x.shape().n;
  const int plane_out = d.h_out * d.w_out;
  const int patch = d.c_in * d.k * d.k;
  Tensor<T> out(Shape{batch, d.c_out, d.h_out, d.w_out});
  std::vector<T> cols;
  for (int n = 0; n < batch; ++n) {
    im2col(x, n, d, geom, cols);
    for (int co = 0; co < d.c_out; ++co) {
      T* dst = out.plane(n, co);
      std::fill_n(dst, plane_out, bias[co]);
      const T* wrow = kernel.data() + static_cast<std::size_t>(co) * patch;
      for (int q = 0; q < patch; ++q) {
        const T wv = wrow[q];
        if (wv == T(0)) continue;
        const T* src = cols.data() + static_cast<std::size_t>(q) * plane_out;
        for (int p = 0; p < plane_out; ++p) dst[p] += wv * src[p];
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& x,
                             const Tensor<T>& kernel, ConvGeometry geom) {
  const ConvDims d = conv_dims<T>(x.shape(), kernel.shape(), geom);
  const int batch = x.shape().n;
  require_same(grad_out.shape(), Shape{batch, d.c_out, d.h_out, d.w_out}, "conv2d_backward");
  const int plane_out = d.h_out * d.w_out;
  const int patch = d.c_in * d.k * d.k;
  ConvGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(kernel.shape()), Tensor<T>(vector_shape(d.c_out))};
  std::vector<T> cols;
  std::vector<T> dcols;
  for (int n = 0; n < batch; ++n) {
    im2col(x, n, d, geom, cols);
    dcols.assign(cols.size(), T(0));
    for (int co = 0; co < d.c_out; ++co) {
      const T* go = grad_out.plane(n, co);
      T bsum = 0;
      for (int p = 0; p < plane_out; ++p) bsum += go[p];
      g.dbias[co] += bsum;
      const T* wrow = kernel.data() + static_cast<std::size_t>(co) * patch;
      T* dwrow = g.dkernel.data() + static_cast<std::size_t>(co) * patch;
      for (int q = 0; q < patch; ++q) {
        const T* src = cols.data() + static_cast<std::size_t>(q) * plane_out;
        T* dsrc = dcols.data() + static_cast<std::size_t>(q) * plane_out;
        const T wv = wrow[q];
        T acc = 0;
        for (int p = 0; p < plane_out; ++p) {
          acc += go[p] * src[p];
          dsrc[p] += wv * go[p];
        }
        dwrow[q] += acc;
      }
    }
    col2im_add(dcols, n, d, geom, g.dx);
  }
  return g;
}

// --- activations -------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return map(x, [](T v) { return v > T(0) ? v : T(0); });
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& x) {
  return zip(grad_out, x, [](T g, T v) { return v > T(0) ? g : T(0); }, "relu_backward");
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return map(x, [](T v) { return sigmoid_scalar(v); });
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& grad_out, const Tensor<T>& y) {
  return zip(grad_out, y, [](T g, T s) { return g * s * (T(1) - s); }, "sigmoid_backward");
}

template <typename T>
Tensor<T> tanh_act(const Tensor<T>& x) {
  return map(x, [](T v) { return std::tanh(v); });
}

template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& grad_out, const Tensor<T>& y) {
  return zip(grad_out, y, [](T g, T t) { return g * (T(1) - t * t); }, "tanh_backward");
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  return map(x, [](T v) { return v * sigmoid_scalar(v); });
}

template <typename T>
Tensor<T> silu_backward(const Tensor<T>& grad_out, const Tensor<T>& x) {
  return zip(grad_out, x,
             [](T g, T v) {
               const T s = sigmoid_scalar(v);
               return g * (s + v * s * (T(1) - s));
             },
             "silu_backward");
}

// --- broadcasting ------------------------------------------------------------

namespace {

enum class Broadcast { kChannel, kSpatial };

template <typename T>
Broadcast broadcast_kind(const Tensor<T>& x, const Tensor<T>& g) {
  const Shape& xs = x.shape();
  const Shape& gs = g.shape();
  if (gs == Shape{xs.n, xs.c, 1, 1}) return Broadcast::kChannel;
  if (gs == Shape{xs.n, 1, xs.h, xs.w}) return Broadcast::kSpatial;
  throw ShapeError("broadcast_mul: gate " + gs.str() + " is incompatible with " + xs.str());
}

}  // namespace

template <typename T>
Tensor<T> broadcast_mul(const Tensor<T>& x, const Tensor<T>& g) {
  const Broadcast kind = broadcast_kind(x, g);
  const Shape& s = x.shape();
  const std::size_t plane = s.plane();
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* src = x.plane(n, c);
      T* dst = out.plane(n, c);
      if (kind == Broadcast::kChannel) {
        const T gv = g(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * gv;
      } else {
        const T* gp = g.plane(n, 0);
        for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * gp[i];
      }
    }
  }
  return out;
}

template <typename T>
BroadcastGrads<T> broadcast_mul_backward(const Tensor<T>& grad_out, const Tensor<T>& x,
                                         const Tensor<T>& g) {
  const Broadcast kind = broadcast_kind(x, g);
  require_same(grad_out.shape(), x.shape(), "broadcast_mul_backward");
  const Shape& s = x.shape();
  const std::size_t plane = s.plane();
  BroadcastGrads<T> r{Tensor<T>(s), Tensor<T>(g.shape())};
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* go = grad_out.plane(n, c);
      const T* src = x.plane(n, c);
      T* dx = r.dx.plane(n, c);
      if (kind == Broadcast::kChannel) {
        const T gv = g(n, c, 0, 0);
        T acc = 0;
        for (std::size_t i = 0; i < plane; ++i) {
          dx[i] = go[i] * gv;
          acc += go[i] * src[i];
        }
        r.dg(n, c, 0, 0) += acc;
      } else {
        const T* gp = g.plane(n, 0);
        T* dg = r.dg.plane(n, 0);
        for (std::size_t i = 0; i < plane; ++i) {
          dx[i] = go[i] * gp[i];
          dg[i] += go[i] * src[i];
        }
      }
    }
  }
  return r;
}

// --- structural --------------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: " + sa.str() + " and " + sb.str() + " differ outside C");
  }
  Tensor<T> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t plane = sa.plane();
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a.plane(n, 0), sa.c * plane, out.plane(n, 0));
    std::copy_n(b.plane(n, 0), sb.c * plane, out.plane(n, sa.c));
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int at) {
  const Shape& s = x.shape();
  if (at <= 0 || at >= s.c) {
    throw ShapeError("split_channels: split point " + std::to_string(at) +
                     " outside (0, " + std::to_string(s.c) + ")");
  }
  Tensor<T> a(Shape{s.n, at, s.h, s.w});
  Tensor<T> b(Shape{s.n, s.c - at, s.h, s.w});
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    std::copy_n(x.plane(n, 0), at * plane, a.plane(n, 0));
    std::copy_n(x.plane(n, at), (s.c - at) * plane, b.plane(n, 0));
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return zip(a, b, [](T u, T v) { return u + v; }, "add");
}

template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& b) {
  require_same(acc.shape(), b.shape(), "add_inplace");
  T* dst = acc.data();
  const T* src = b.data();
  for (std::size_t i = 0; i < acc.size(); ++i) dst[i] += src[i];
}

// --- batch norm --------------------------------------------------------------

template <typename T>
Tensor<T> batchnorm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          T eps, BatchNormCache<T>* cache, std::vector<T>* mean_out,
                          std::vector<T>* var_out) {
  const Shape& s = x.shape();
  check_vector(gamma, s.c, "batchnorm gamma");
  check_vector(beta, s.c, "batchnorm beta");
  const std::size_t plane = s.plane();
  const T count = static_cast<T>(s.n * plane);
  Tensor<T> out(s);
  Tensor<T> x_hat(s);
  std::vector<T> inv_std(s.c);
  if (mean_out) mean_out->assign(s.c, T(0));
  if (var_out) var_out->assign(s.c, T(0));
  for (int c = 0; c < s.c; ++c) {
    T mean = 0;
    for (int n = 0; n < s.n; ++n) {
      const T* p = x.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) mean += p[i];
    }
    mean /= count;
    T var = 0;
    for (int n = 0; n < s.n; ++n) {
      const T* p = x.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
    }
    var /= count;
    const T istd = T(1) / std::sqrt(var + eps);
    inv_std[c] = istd;
    for (int n = 0; n < s.n; ++n) {
      const T* p = x.plane(n, c);
      T* xh = x_hat.plane(n, c);
      T* dst = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (p[i] - mean) * istd;
        dst[i] = gamma[c] * xh[i] + beta[c];
      }
    }
    if (mean_out) (*mean_out)[c] = mean;
    if (var_out) (*var_out)[c] = var;
  }
  if (cache) {
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
Tensor<T> batchnorm_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                         const Tensor<T>& running_mean, const Tensor<T>& running_var, T eps) {
  const Shape& s = x.shape();
  check_vector(gamma, s.c, "batchnorm gamma");
  check_vector(beta, s.c, "batchnorm beta");
  check_vector(running_mean, s.c, "batchnorm running mean");
  check_vector(running_var, s.c, "batchnorm running var");
  const std::size_t plane = s.plane();
  Tensor<T> out(s);
  for (int c = 0; c < s.c; ++c) {
    const T scale = gamma[c] / std::sqrt(running_var[c] + eps);
    const T shift = beta[c] - running_mean[c] * scale;
    for (int n = 0; n < s.n; ++n) {
      const T* p = x.plane(n, c);
      T* dst = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = p[i] * scale + shift;
    }
  }
  return out;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& grad_out, const BatchNormCache<T>& cache,
                                     const Tensor<T>& gamma) {
  const Shape& s = cache.x_hat.shape();
  require_same(grad_out.shape(), s, "batchnorm_backward");
  const std::size_t plane = s.plane();
  const T count = static_cast<T>(s.n * plane);
  BatchNormGrads<T> g{Tensor<T>(s), Tensor<T>(vector_shape(s.c)), Tensor<T>(vector_shape(s.c))};
  for (int c = 0; c < s.c; ++c) {
    T sum_g = 0;
    T sum_gx = 0;
    for (int n = 0; n < s.n; ++n) {
      const T* go = grad_out.plane(n, c);
      const T* xh = cache.x_hat.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_g += go[i];
        sum_gx += go[i] * xh[i];
      }
    }
    g.dbeta[c] = sum_g;
    g.dgamma[c] = sum_gx;
    const T k = gamma[c] * cache.inv_std[c] / count;
    for (int n = 0; n < s.n; ++n) {
      const T* go = grad_out.plane(n, c);
      const T* xh = cache.x_hat.plane(n, c);
      T* dx = g.dx.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        dx[i] = k * (count * go[i] - sum_g - xh[i] * sum_gx);
      }
    }
  }
  return g;
}

// --- loss --------------------------------------------------------------------

template <typename T>
T bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets, Tensor<T>* grad) {
  require_same(logits.shape(), targets.shape(), "bce_with_logits");
  const T count = static_cast<T>(logits.size());
  if (grad) *grad = Tensor<T>(logits.shape());
  T loss = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const T z = logits[i];
    const T t = targets[i];
    loss += std::max(z, T(0)) - z * t + std::log1p(std::exp(-std::abs(z)));
    if (grad) (*grad)[i] = (sigmoid_scalar(z) - t) / count;
  }
  return loss / count;
}

#define MOONNET_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                         \
  template Tensor<T> global_avg_pool_backward(const Tensor<T>&, const Shape&);                  \
  template MaxReduction<T> global_max_pool(const Tensor<T>&);                                   \
  template Tensor<T> channel_reduce_avg(const Tensor<T>&);                                      \
  template Tensor<T> channel_reduce_avg_backward(const Tensor<T>&, const Shape&);               \
  template MaxReduction<T> channel_reduce_max(const Tensor<T>&);                                \
  template Tensor<T> max_reduction_backward(const Tensor<T>&, const std::vector<std::size_t>&,  \
                                            const Shape&);                                      \
  template Tensor<T> fc(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                  \
  template FcGrads<T> fc_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, ConvGeometry); \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                        ConvGeometry);                                          \
  template Tensor<T> relu(const Tensor<T>&);                                                    \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                 \
  template Tensor<T> sigmoid_backward(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> tanh_act(const Tensor<T>&);                                                \
  template Tensor<T> tanh_backward(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> silu(const Tensor<T>&);                                                    \
  template Tensor<T> silu_backward(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> broadcast_mul(const Tensor<T>&, const Tensor<T>&);                         \
  template BroadcastGrads<T> broadcast_mul_backward(const Tensor<T>&, const Tensor<T>&,         \
                                                    const Tensor<T>&);                          \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                       \
  template std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>&, int);               \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                   \
  template void add_inplace(Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> batchnorm_train(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T,   \
                                     BatchNormCache<T>*, std::vector<T>*, std::vector<T>*);     \
  template Tensor<T> batchnorm_eval(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                    const Tensor<T>&, const Tensor<T>&, T);                     \
  template BatchNormGrads<T> batchnorm_backward(const Tensor<T>&, const BatchNormCache<T>&,     \
                                                const Tensor<T>&);                              \
  template T bce_with_logits(const Tensor<T>&, const Tensor<T>&, Tensor<T>*);

MOONNET_INSTANTIATE_OPS(float)
MOONNET_INSTANTIATE_OPS(double)

}  // namespace moonnet
