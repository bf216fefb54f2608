#include "moonnet/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "moonnet/rng.hpp"

namespace moonnet {

std::string_view to_string(GateKind kind) {
  return kind == GateKind::SigmoidOriginal ? "sigmoid-original" : "residual-tanh";
}

GateKind parse_gate_kind(std::string_view text) {
  if (text == "sigmoid" || text == "sigmoid-original") return GateKind::SigmoidOriginal;
  if (text == "residual-tanh" || text == "tanh") return GateKind::ResidualTanh;
  throw ConfigError("unknown gate kind '" + std::string(text) +
                    "' (expected sigmoid-original or residual-tanh)");
}

template <typename T>
T gate_multiplier(GateKind kind, T logit) {
  if (kind == GateKind::SigmoidOriginal) {
    return logit >= T(0) ? T(1) / (T(1) + std::exp(-logit))
                         : std::exp(logit) / (T(1) + std::exp(logit));
  }
  return T(1) + std::tanh(logit);
}

int bottleneck_width(int channels, int reduction) {
  if (channels < 1) throw ConfigError("attention: channel count must be >= 1");
  if (reduction <= 0) throw ConfigError("attention: reduction ratio must be > 0");
  return std::max(8, channels / reduction);
}

// --- Gate --------------------------------------------------------------------

template <typename T>
void Gate<T>::forward(const Tensor<T>& logits) {
  if (kind == GateKind::SigmoidOriginal) {
    activation = sigmoid(logits);
    multiplier = activation;
  } else {
    activation = tanh_act(logits);
    multiplier = activation;
    for (auto& v : multiplier.values()) v = T(1) + v;
  }
}

template <typename T>
Tensor<T> Gate<T>::backward(const Tensor<T>& grad_multiplier) const {
  return kind == GateKind::SigmoidOriginal ? sigmoid_backward(grad_multiplier, activation)
                                           : tanh_backward(grad_multiplier, activation);
}

// --- ChannelMlp --------------------------------------------------------------

template <typename T>
ChannelMlp<T>::ChannelMlp(const std::string& name, int channels, int reduction)
    : channels_(channels),
      hidden_(bottleneck_width(channels, reduction)),
      w1_(name + ".fc1.weight", matrix_shape(hidden_, channels)),
      b1_(name + ".fc1.bias", vector_shape(hidden_)),
      w2_(name + ".fc2.weight", matrix_shape(channels, hidden_)),
      b2_(name + ".fc2.bias", vector_shape(channels)) {}

template <typename T>
void ChannelMlp<T>::identity_safe_init(std::uint64_t seed) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels_));
  Rng wrng(mix_seed(seed, w1_.name));
  fill_uniform(w1_.value, -bound, bound, wrng);
  Rng brng(mix_seed(seed, b1_.name));
  fill_uniform(b1_.value, -bound, bound, brng);
  w2_.value.fill(T(0));
  b2_.value.fill(T(0));
}

template <typename T>
Tensor<T> ChannelMlp<T>::forward(const Tensor<T>& pooled) {
  input_ = pooled;
  pre_relu_ = fc(pooled, w1_.value, b1_.value);
  relu_margin_ = std::numeric_limits<double>::infinity();
  for (T v : pre_relu_.values()) relu_margin_ = std::min(relu_margin_, std::abs(double(v)));
  hidden_act_ = relu(pre_relu_);
  return fc(hidden_act_, w2_.value, b2_.value);
}

template <typename T>
Tensor<T> ChannelMlp<T>::backward(const Tensor<T>& grad_out) {
  FcGrads<T> g2 = fc_backward(grad_out, hidden_act_, w2_.value);
  add_inplace(w2_.grad, g2.dweight);
  add_inplace(b2_.grad, g2.dbias);
  FcGrads<T> g1 = fc_backward(relu_backward(g2.dx, pre_relu_), input_, w1_.value);
  add_inplace(w1_.grad, g1.dweight);
  add_inplace(b1_.grad, g1.dbias);
  return std::move(g1.dx);
}

template <typename T>
void ChannelMlp<T>::collect_params(std::vector<Param<T>*>& out) {
  out.push_back(&w1_);
  out.push_back(&b1_);
  out.push_back(&w2_);
  out.push_back(&b2_);
}

// --- SEBlock -----------------------------------------------------------------

template <typename T>
SEBlock<T>::SEBlock(const std::string& name, int channels, AttentionOptions opts,
                    std::uint64_t seed)
    : mlp_(name, channels, opts.reduction) {
  gate_.kind = opts.gate;
  mlp_.identity_safe_init(seed);
}

template <typename T>
Tensor<T> SEBlock<T>::forward(const Tensor<T>& x) {
  if (x.shape().c != mlp_.channels()) {
    throw ShapeError("SE block built for " + std::to_string(mlp_.channels()) +
                     " channels, got input " + x.shape().str());
  }
  input_ = x;
  logits_ = mlp_.forward(global_avg_pool(x));
  gate_.forward(logits_);
  return broadcast_mul(x, gate_.multiplier);
}

template <typename T>
Tensor<T> SEBlock<T>::backward(const Tensor<T>& grad_out) {
  BroadcastGrads<T> g = broadcast_mul_backward(grad_out, input_, gate_.multiplier);
  Tensor<T> dpooled = mlp_.backward(gate_.backward(g.dg));
  add_inplace(g.dx, global_avg_pool_backward(dpooled, input_.shape()));
  return std::move(g.dx);
}

// --- CBAM --------------------------------------------------------------------

namespace {

template <typename T>
Tensor<T> stack_batch(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& s = a.shape();
  Tensor<T> out(Shape{2 * s.n, s.c, s.h, s.w});
  std::copy(a.values().begin(), a.values().end(), out.data());
  std::copy(b.values().begin(), b.values().end(), out.data() + a.size());
  return out;
}

}  // namespace

template <typename T>
CBAM<T>::CBAM(const std::string& name, int channels, AttentionOptions opts, std::uint64_t seed)
    : mlp_(name, channels, opts.reduction),
      kernel_size_(opts.spatial_kernel),
      spatial_kernel_(name + ".spatial.weight", Shape{1, 2, opts.spatial_kernel, opts.spatial_kernel}),
      spatial_bias_(name + ".spatial.bias", vector_shape(1)) {
  if (kernel_size_ < 1 || kernel_size_ % 2 == 0) {
    throw ConfigError("CBAM: spatial kernel size must be a positive odd integer");
  }
  channel_gate_.kind = opts.gate;
  spatial_gate_.kind = opts.gate;
  identity_safe_init(seed);
}

template <typename T>
void CBAM<T>::identity_safe_init(std::uint64_t seed) {
  mlp_.identity_safe_init(seed);
  spatial_kernel_.value.fill(T(0));
  spatial_bias_.value.fill(T(0));
}

template <typename T>
Tensor<T> CBAM<T>::forward(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.c != mlp_.channels()) {
    throw ShapeError("CBAM built for " + std::to_string(mlp_.channels()) +
                     " channels, got input " + s.str());
  }
  input_ = x;

  // Channel gate: the same MLP sees the avg and max statistics.
  MaxReduction<T> gmp = global_max_pool(x);
  gmp_argmax_ = std::move(gmp.argmax);
  Tensor<T> both = mlp_.forward(stack_batch(global_avg_pool(x), gmp.out));
  channel_logits_ = Tensor<T>(Shape{s.n, s.c, 1, 1});
  for (std::size_t i = 0; i < channel_logits_.size(); ++i) {
    channel_logits_[i] = both[i] + both[i + channel_logits_.size()];
  }
  channel_gate_.forward(channel_logits_);
  x_channel_ = broadcast_mul(x, channel_gate_.multiplier);

  // Spatial gate on the channel-gated tensor.
  MaxReduction<T> cmax = channel_reduce_max(x_channel_);
  cmax_argmax_ = std::move(cmax.argmax);
  channel_reduced_shape_ = x_channel_.shape();
  pooled_maps_ = concat_channels(channel_reduce_avg(x_channel_), cmax.out);
  spatial_logits_ = conv2d(pooled_maps_, spatial_kernel_.value, spatial_bias_.value,
                           ConvGeometry{1, (kernel_size_ - 1) / 2});
  spatial_gate_.forward(spatial_logits_);

  kink_margin_ = std::min({mlp_.relu_margin(), gmp.min_gap, cmax.min_gap});
  return broadcast_mul(x_channel_, spatial_gate_.multiplier);
}

template <typename T>
Tensor<T> CBAM<T>::backward(const Tensor<T>& grad_out) {
  const Shape& s = input_.shape();

  BroadcastGrads<T> gs = broadcast_mul_backward(grad_out, x_channel_, spatial_gate_.multiplier);
  Tensor<T> dz_s = spatial_gate_.backward(gs.dg);
  ConvGrads<T> gc = conv2d_backward(dz_s, pooled_maps_, spatial_kernel_.value,
                                    ConvGeometry{1, (kernel_size_ - 1) / 2});
  add_inplace(spatial_kernel_.grad, gc.dkernel);
  add_inplace(spatial_bias_.grad, gc.dbias);
  auto [df_avg, df_max] = split_channels(gc.dx, 1);
  Tensor<T> dx_channel = std::move(gs.dx);
  add_inplace(dx_channel, channel_reduce_avg_backward(df_avg, channel_reduced_shape_));
  add_inplace(dx_channel, max_reduction_backward(df_max, cmax_argmax_, channel_reduced_shape_));

  BroadcastGrads<T> gcg = broadcast_mul_backward(dx_channel, input_, channel_gate_.multiplier);
  Tensor<T> dz_c = channel_gate_.backward(gcg.dg);
  Tensor<T> dboth(Shape{2 * s.n, s.c, 1, 1});
  for (std::size_t i = 0; i < dz_c.size(); ++i) {
    dboth[i] = dz_c[i];
    dboth[i + dz_c.size()] = dz_c[i];
  }
  Tensor<T> dstats = mlp_.backward(dboth);
  Tensor<T> davg(Shape{s.n, s.c, 1, 1});
  Tensor<T> dmax(Shape{s.n, s.c, 1, 1});
  std::copy_n(dstats.data(), davg.size(), davg.data());
  std::copy_n(dstats.data() + davg.size(), dmax.size(), dmax.data());

  Tensor<T> dx = std::move(gcg.dx);
  add_inplace(dx, global_avg_pool_backward(davg, s));
  add_inplace(dx, max_reduction_backward(dmax, gmp_argmax_, s));
  return dx;
}

template <typename T>
void CBAM<T>::collect_params(std::vector<Param<T>*>& out) {
  mlp_.collect_params(out);
  out.push_back(&spatial_kernel_);
  out.push_back(&spatial_bias_);
}

template float gate_multiplier(GateKind, float);
template double gate_multiplier(GateKind, double);
template struct Gate<float>;
template struct Gate<double>;
template class ChannelMlp<float>;
template class ChannelMlp<double>;
template class SEBlock<float>;
template class SEBlock<double>;
template class CBAM<float>;
template class CBAM<double>;

}  // namespace moonnet
