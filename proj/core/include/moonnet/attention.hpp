#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "moonnet/layers.hpp"

namespace moonnet {

/// How attention logits become a multiplicative gate.
///   SigmoidOriginal: x * sigmoid(z)       multiplier in (0, 1), 0.5 at z = 0
///   ResidualTanh:    x * (1 + tanh(z))    multiplier in (0, 2), 1 at z = 0
enum class GateKind { SigmoidOriginal, ResidualTanh };

std::string_view to_string(GateKind kind);
/// Accepts "sigmoid" / "sigmoid-original" and "residual-tanh" / "tanh".
GateKind parse_gate_kind(std::string_view text);

template <typename T>
T gate_multiplier(GateKind kind, T logit);

/// Bottleneck width of the channel MLP: max(8, floor(C / r)).
int bottleneck_width(int channels, int reduction);

/// Gate applied to a logit tensor, remembering what its derivative needs.
template <typename T>
struct Gate {
  GateKind kind = GateKind::ResidualTanh;
  Tensor<T> activation;  // sigmoid(z) or tanh(z)
  Tensor<T> multiplier;  // sigmoid(z) or 1 + tanh(z)

  void forward(const Tensor<T>& logits);
  /// d(loss)/d(logits) given d(loss)/d(multiplier).
  Tensor<T> backward(const Tensor<T>& grad_multiplier) const;
};

struct AttentionOptions {
  int reduction = 16;
  int spatial_kernel = 7;
  GateKind gate = GateKind::ResidualTanh;
};

/// fc1 -> ReLU -> fc2 on (n, C, 1, 1) channel statistics.
template <typename T>
class ChannelMlp {
 public:
  ChannelMlp(const std::string& name, int channels, int reduction);

  Tensor<T> forward(const Tensor<T>& pooled);
  /// Returns d(loss)/d(pooled); accumulates parameter gradients.
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect_params(std::vector<Param<T>*>& out);
  /// fc1/b1 from seeded uniform(-1/sqrt(C), 1/sqrt(C)); fc2/b2 zeroed.
  void identity_safe_init(std::uint64_t seed);

  int channels() const { return channels_; }
  int hidden() const { return hidden_; }
  double relu_margin() const { return relu_margin_; }

  Param<T>& fc1_weight() { return w1_; }
  Param<T>& fc1_bias() { return b1_; }
  Param<T>& fc2_weight() { return w2_; }
  Param<T>& fc2_bias() { return b2_; }

 private:
  int channels_;
  int hidden_;
  Param<T> w1_, b1_, w2_, b2_;
  Tensor<T> input_, pre_relu_, hidden_act_;
  double relu_margin_ = 0.0;
};

/// Squeeze-and-excitation: y = x * gate(W2 relu(W1 GAP(x) + b1) + b2).
template <typename T>
class SEBlock final : public Module<T> {
 public:
  SEBlock(const std::string& name, int channels, AttentionOptions opts, std::uint64_t seed);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_params(std::vector<Param<T>*>& out) override { mlp_.collect_params(out); }
  double kink_margin() const override { return mlp_.relu_margin(); }

  void identity_safe_init(std::uint64_t seed) { mlp_.identity_safe_init(seed); }

  GateKind gate() const { return gate_.kind; }
  ChannelMlp<T>& mlp() { return mlp_; }
  /// Channel logits z from the last forward, shape (n, C, 1, 1).
  const Tensor<T>& last_logits() const { return logits_; }

 private:
  ChannelMlp<T> mlp_;
  Gate<T> gate_;
  Tensor<T> input_, logits_;
};

/// CBAM: channel gate from a shared MLP over GAP and GMP statistics, then a
/// spatial gate from a k x k conv over [channel-mean, channel-max] of the
/// channel-gated tensor. Both sites use the same GateKind.
template <typename T>
class CBAM final : public Module<T> {
 public:
  CBAM(const std::string& name, int channels, AttentionOptions opts, std::uint64_t seed);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  double kink_margin() const override { return kink_margin_; }

  /// Zeroes fc2, b2, the spatial kernel and the spatial bias.
  void identity_safe_init(std::uint64_t seed);

  GateKind gate() const { return channel_gate_.kind; }
  int spatial_kernel_size() const { return kernel_size_; }
  ChannelMlp<T>& mlp() { return mlp_; }
  Param<T>& spatial_kernel() { return spatial_kernel_; }
  Param<T>& spatial_bias() { return spatial_bias_; }
  const Tensor<T>& last_channel_logits() const { return channel_logits_; }
  const Tensor<T>& last_spatial_logits() const { return spatial_logits_; }

 private:
  ChannelMlp<T> mlp_;
  int kernel_size_;
  Param<T> spatial_kernel_;
  Param<T> spatial_bias_;
  Gate<T> channel_gate_;
  Gate<T> spatial_gate_;
  Tensor<T> input_, x_channel_, pooled_maps_, channel_logits_, spatial_logits_;
  std::vector<std::size_t> gmp_argmax_, cmax_argmax_;
  Shape channel_reduced_shape_;
  double kink_margin_ = 0.0;
};

/// Re-applies identity-safe initialization to an attention module.
template <typename M>
M& identity_safe_init(M& module, std::uint64_t seed) {
  module.identity_safe_init(seed);
  return module;
}

extern template class ChannelMlp<float>;
extern template class ChannelMlp<double>;
extern template class SEBlock<float>;
extern template class SEBlock<double>;
extern template class CBAM<float>;
extern template class CBAM<double>;

}  // namespace moonnet
