#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "moonnet/attention.hpp"
#include "moonnet/layers.hpp"

namespace moonnet {

enum class AttentionKind { None, SE, CBAM };

std::string_view to_string(AttentionKind kind);

/// Base channel ladders before the width multiplier.
enum class ChannelLadder {
  Base,     // (64, 128, 256, 512, 1024), designs 1-3
  Doubled,  // (128, 256, 512, 1024, 2048), designs 0 and 4-6
};

std::string_view to_string(ChannelLadder ladder);
ChannelLadder parse_ladder(std::string_view text);

inline constexpr int kNumDesigns = 7;
inline constexpr int kMoonNetDesign = 5;
inline constexpr int kStages = 5;

struct StageSpec {
  int out_channels = 1;
  AttentionKind attention_after_conv = AttentionKind::None;
  bool has_c2f = true;
  int c2f_bottlenecks = 1;
};

struct BackboneDesign {
  int design_id = 0;
  std::vector<StageSpec> stages;
  double width_multiplier = 1.0;
  GateKind gate = GateKind::ResidualTanh;
  ChannelLadder ladder = ChannelLadder::Doubled;
  int reduction = 16;
  int spatial_kernel = 7;

  std::vector<int> channels() const;
  std::vector<AttentionKind> attention_sequence() const;
  /// Keeps only the first `count` stages.
  BackboneDesign truncated(int count) const;
};

/// Attention placed after each stage conv for designs 0..6.
std::array<AttentionKind, kStages> design_attention(int design_id);
ChannelLadder default_ladder(int design_id);
std::array<int, kStages> base_channels(ChannelLadder ladder);
/// round(base * width), at least 1.
int scale_channels(int base, double width_multiplier);

BackboneDesign build_design(int design_id, double width_multiplier, GateKind gate);
BackboneDesign build_design(int design_id, double width_multiplier, GateKind gate,
                            ChannelLadder ladder);

/// SE / CBAM module for `kind`, or an Identity for AttentionKind::None.
template <typename T>
std::unique_ptr<Module<T>> make_attention(AttentionKind kind, const std::string& name,
                                          int channels, AttentionOptions opts,
                                          std::uint64_t seed);

/// One backbone stage: 3x3 stride-2 ConvBnAct -> attention -> optional C2f.
template <typename T>
class Stage final : public Module<T> {
 public:
  Stage(const std::string& name, int c_in, const StageSpec& spec, AttentionOptions opts,
        std::uint64_t seed);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  void collect_buffers(std::vector<Buffer<T>*>& out) override;
  void set_training(bool training) override;
  double kink_margin() const override { return attention_->kink_margin(); }

  Module<T>& attention() { return *attention_; }

 private:
  ConvBnAct<T> conv_;
  std::unique_ptr<Module<T>> attention_;
  std::unique_ptr<C2f<T>> c2f_;
};

/// Stage pipeline for a BackboneDesign. forward() returns the last stage;
/// forward_all() returns every stage output for pyramid consumers.
template <typename T>
class Backbone final : public Module<T> {
 public:
  Backbone(const BackboneDesign& design, std::uint64_t seed, int in_channels = 3);

  std::vector<Tensor<T>> forward_all(const Tensor<T>& x);
  /// `grads[i]` is d(loss)/d(stage i output); stages that do not feed the
  /// loss take a zero tensor of their output shape.
  Tensor<T> backward_all(const std::vector<Tensor<T>>& grads);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  void collect_buffers(std::vector<Buffer<T>*>& out) override;
  void set_training(bool training) override;
  double kink_margin() const override;

  const BackboneDesign& design() const { return design_; }
  Stage<T>& stage(std::size_t i) { return *stages_.at(i); }
  std::size_t num_stages() const { return stages_.size(); }

 private:
  BackboneDesign design_;
  int in_channels_;
  std::vector<std::unique_ptr<Stage<T>>> stages_;
  std::vector<Shape> output_shapes_;
};

/// Per-branch attention over a set of multi-resolution maps: branch i goes
/// through its own module A_i. Shapes are unchanged.
template <typename T>
class BranchAttention {
 public:
  BranchAttention(const std::vector<int>& branch_channels,
                  const std::vector<AttentionKind>& kinds, AttentionOptions opts,
                  std::uint64_t seed, const std::string& name = "branch");

  std::vector<Tensor<T>> forward(const std::vector<Tensor<T>>& branches);
  std::vector<Tensor<T>> backward(const std::vector<Tensor<T>>& grads);
  std::vector<Param<T>*> params();
  std::size_t size() const { return modules_.size(); }
  Module<T>& module(std::size_t i) { return *modules_.at(i); }

 private:
  std::vector<std::unique_ptr<Module<T>>> modules_;
};

/// Applies freshly built, identity-safe modules to `branches`.
template <typename T>
std::vector<Tensor<T>> per_branch_attention(const std::vector<Tensor<T>>& branches,
                                            const std::vector<AttentionKind>& kinds,
                                            GateKind gate, std::uint64_t seed = 0);

extern template class Stage<float>;
extern template class Stage<double>;
extern template class Backbone<float>;
extern template class Backbone<double>;
extern template class BranchAttention<float>;
extern template class BranchAttention<double>;

}  // namespace moonnet
