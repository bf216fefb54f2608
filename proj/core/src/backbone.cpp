#include "moonnet/backbone.hpp"

#include <cmath>

#include "moonnet/rng.hpp"

namespace moonnet {

std::string_view to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::SE:
      return "SE";
    case AttentionKind::CBAM:
      return "CBAM";
    case AttentionKind::None:
      break;
  }
  return "None";
}

std::string_view to_string(ChannelLadder ladder) {
  return ladder == ChannelLadder::Base ? "base" : "doubled";
}

ChannelLadder parse_ladder(std::string_view text) {
  if (text == "base") return ChannelLadder::Base;
  if (text == "doubled") return ChannelLadder::Doubled;
  throw ConfigError("unknown channel ladder '" + std::string(text) + "' (expected base or doubled)");
}

std::array<AttentionKind, kStages> design_attention(int design_id) {
  using A = AttentionKind;
  switch (design_id) {
    case 0: return {A::None, A::None, A::None, A::None, A::None};
    case 1: return {A::SE, A::SE, A::SE, A::SE, A::SE};
    case 2: return {A::CBAM, A::CBAM, A::CBAM, A::CBAM, A::CBAM};
    case 3: return {A::CBAM, A::SE, A::CBAM, A::SE, A::CBAM};
    case 4: return {A::CBAM, A::SE, A::CBAM, A::SE, A::CBAM};
    case 5: return {A::SE, A::CBAM, A::SE, A::CBAM, A::SE};
    case 6: return {A::SE, A::SE, A::CBAM, A::SE, A::CBAM};
    default:
      throw ConfigError("unknown backbone design " + std::to_string(design_id) +
                        " (expected 0..6)");
  }
}

ChannelLadder default_ladder(int design_id) {
  design_attention(design_id);  // validates the id
  return (design_id >= 1 && design_id <= 3) ? ChannelLadder::Base : ChannelLadder::Doubled;
}

std::array<int, kStages> base_channels(ChannelLadder ladder) {
  if (ladder == ChannelLadder::Base) return {64, 128, 256, 512, 1024};
  return {128, 256, 512, 1024, 2048};
}

int scale_channels(int base, double width_multiplier) {
  const long scaled = std::lround(static_cast<double>(base) * width_multiplier);
  return static_cast<int>(std::max(1L, scaled));
}

BackboneDesign build_design(int design_id, double width_multiplier, GateKind gate) {
  return build_design(design_id, width_multiplier, gate, default_ladder(design_id));
}

BackboneDesign build_design(int design_id, double width_multiplier, GateKind gate,
                            ChannelLadder ladder) {
  const auto kinds = design_attention(design_id);
  if (!(width_multiplier > 0.0 && width_multiplier <= 1.0)) {
    throw ConfigError("width multiplier must lie in (0, 1]");
  }
  BackboneDesign d;
  d.design_id = design_id;
  d.width_multiplier = width_multiplier;
  d.gate = gate;
  d.ladder = ladder;
  const auto base = base_channels(ladder);
  for (int i = 0; i < kStages; ++i) {
    d.stages.push_back(StageSpec{scale_channels(base[i], width_multiplier), kinds[i], true, 1});
  }
  return d;
}

std::vector<int> BackboneDesign::channels() const {
  std::vector<int> out;
  for (const auto& s : stages) out.push_back(s.out_channels);
  return out;
}

std::vector<AttentionKind> BackboneDesign::attention_sequence() const {
  std::vector<AttentionKind> out;
  for (const auto& s : stages) out.push_back(s.attention_after_conv);
  return out;
}

BackboneDesign BackboneDesign::truncated(int count) const {
  if (count < 1 || count > static_cast<int>(stages.size())) {
    throw ConfigError("cannot truncate a " + std::to_string(stages.size()) +
                      "-stage design to " + std::to_string(count) + " stages");
  }
  BackboneDesign d = *this;
  d.stages.resize(count);
  return d;
}

template <typename T>
std::unique_ptr<Module<T>> make_attention(AttentionKind kind, const std::string& name,
                                          int channels, AttentionOptions opts,
                                          std::uint64_t seed) {
  switch (kind) {
    case AttentionKind::SE:
      return std::make_unique<SEBlock<T>>(name, channels, opts, seed);
    case AttentionKind::CBAM:
      return std::make_unique<CBAM<T>>(name, channels, opts, seed);
    case AttentionKind::None:
      break;
  }
  return std::make_unique<Identity<T>>();
}

// --- Stage -------------------------------------------------------------------

template <typename T>
Stage<T>::Stage(const std::string& name, int c_in, const StageSpec& spec, AttentionOptions opts,
                std::uint64_t seed)
    : conv_(name + ".conv", c_in, spec.out_channels, 3, 2, seed),
      attention_(make_attention<T>(spec.attention_after_conv, name + ".attn", spec.out_channels,
                                   opts, seed)) {
  if (spec.has_c2f) {
    c2f_ = std::make_unique<C2f<T>>(name + ".c2f", spec.out_channels, spec.out_channels,
                                    spec.c2f_bottlenecks, seed);
  }
}

template <typename T>
Tensor<T> Stage<T>::forward(const Tensor<T>& x) {
  Tensor<T> y = attention_->forward(conv_.forward(x));
  return c2f_ ? c2f_->forward(y) : y;
}

template <typename T>
Tensor<T> Stage<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = c2f_ ? c2f_->backward(grad_out) : grad_out;
  return conv_.backward(attention_->backward(g));
}

template <typename T>
void Stage<T>::collect_params(std::vector<Param<T>*>& out) {
  conv_.collect_params(out);
  attention_->collect_params(out);
  if (c2f_) c2f_->collect_params(out);
}

template <typename T>
void Stage<T>::collect_buffers(std::vector<Buffer<T>*>& out) {
  conv_.collect_buffers(out);
  if (c2f_) c2f_->collect_buffers(out);
}

template <typename T>
void Stage<T>::set_training(bool training) {
  conv_.set_training(training);
  attention_->set_training(training);
  if (c2f_) c2f_->set_training(training);
}

// --- Backbone ----------------------------------------------------------------

template <typename T>
Backbone<T>::Backbone(const BackboneDesign& design, std::uint64_t seed, int in_channels)
    : design_(design), in_channels_(in_channels) {
  const AttentionOptions opts{design.reduction, design.spatial_kernel, design.gate};
  int c_in = in_channels;
  for (std::size_t i = 0; i < design.stages.size(); ++i) {
    stages_.push_back(std::make_unique<Stage<T>>("stage" + std::to_string(i + 1), c_in,
                                                 design.stages[i], opts, seed));
    c_in = design.stages[i].out_channels;
  }
}

template <typename T>
std::vector<Tensor<T>> Backbone<T>::forward_all(const Tensor<T>& x) {
  const Shape& s = x.shape();
  const int factor = 1 << stages_.size();
  if (s.c != in_channels_) {
    throw ShapeError("backbone expects " + std::to_string(in_channels_) +
                     " input channels, got " + s.str());
  }
  if (s.h % factor != 0 || s.w % factor != 0) {
    throw ShapeError("backbone input " + s.str() + " must have H and W divisible by " +
                     std::to_string(factor));
  }
  std::vector<Tensor<T>> outs;
  output_shapes_.clear();
  const Tensor<T>* cur = &x;
  for (auto& st : stages_) {
    outs.push_back(st->forward(*cur));
    output_shapes_.push_back(outs.back().shape());
    cur = &outs.back();
  }
  return outs;
}

template <typename T>
Tensor<T> Backbone<T>::backward_all(const std::vector<Tensor<T>>& grads) {
  if (grads.size() != stages_.size()) {
    throw ShapeError("backbone backward expects one gradient per stage");
  }
  Tensor<T> g = grads.back();
  for (std::size_t i = stages_.size(); i-- > 0;) {
    if (i + 1 < stages_.size()) add_inplace(g, grads[i]);
    g = stages_[i]->backward(g);
  }
  return g;
}

template <typename T>
Tensor<T> Backbone<T>::forward(const Tensor<T>& x) {
  return std::move(forward_all(x).back());
}

template <typename T>
Tensor<T> Backbone<T>::backward(const Tensor<T>& grad_out) {
  std::vector<Tensor<T>> grads;
  for (std::size_t i = 0; i + 1 < output_shapes_.size(); ++i) grads.emplace_back(output_shapes_[i]);
  grads.push_back(grad_out);
  return backward_all(grads);
}

template <typename T>
void Backbone<T>::collect_params(std::vector<Param<T>*>& out) {
  for (auto& st : stages_) st->collect_params(out);
}

template <typename T>
void Backbone<T>::collect_buffers(std::vector<Buffer<T>*>& out) {
  for (auto& st : stages_) st->collect_buffers(out);
}

template <typename T>
void Backbone<T>::set_training(bool training) {
  for (auto& st : stages_) st->set_training(training);
}

template <typename T>
double Backbone<T>::kink_margin() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& st : stages_) m = std::min(m, st->kink_margin());
  return m;
}

// --- BranchAttention ---------------------------------------------------------

template <typename T>
BranchAttention<T>::BranchAttention(const std::vector<int>& branch_channels,
                                    const std::vector<AttentionKind>& kinds,
                                    AttentionOptions opts, std::uint64_t seed,
                                    const std::string& name) {
  if (branch_channels.empty()) throw ConfigError("per-branch attention needs at least one branch");
  if (kinds.size() != branch_channels.size()) {
    throw ConfigError("per-branch attention: " + std::to_string(kinds.size()) +
                      " attention kinds for " + std::to_string(branch_channels.size()) +
                      " branches");
  }
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    modules_.push_back(make_attention<T>(kinds[i], name + std::to_string(i + 1) + ".attn",
                                         branch_channels[i], opts, seed));
  }
}

template <typename T>
std::vector<Tensor<T>> BranchAttention<T>::forward(const std::vector<Tensor<T>>& branches) {
  if (branches.size() != modules_.size()) {
    throw ConfigError("per-branch attention: expected " + std::to_string(modules_.size()) +
                      " branches, got " + std::to_string(branches.size()));
  }
  std::vector<Tensor<T>> out;
  for (std::size_t i = 0; i < branches.size(); ++i) out.push_back(modules_[i]->forward(branches[i]));
  return out;
}

template <typename T>
std::vector<Tensor<T>> BranchAttention<T>::backward(const std::vector<Tensor<T>>& grads) {
  if (grads.size() != modules_.size()) {
    throw ConfigError("per-branch attention: gradient count mismatch");
  }
  std::vector<Tensor<T>> out;
  for (std::size_t i = 0; i < grads.size(); ++i) out.push_back(modules_[i]->backward(grads[i]));
  return out;
}

template <typename T>
std::vector<Param<T>*> BranchAttention<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& m : modules_) m->collect_params(out);
  return out;
}

template <typename T>
std::vector<Tensor<T>> per_branch_attention(const std::vector<Tensor<T>>& branches,
                                            const std::vector<AttentionKind>& kinds,
                                            GateKind gate, std::uint64_t seed) {
  std::vector<int> channels;
  for (const auto& b : branches) channels.push_back(b.shape().c);
  if (kinds.size() != branches.size()) {
    throw ConfigError("per-branch attention: " + std::to_string(kinds.size()) +
                      " attention kinds for " + std::to_string(branches.size()) + " branches");
  }
  AttentionOptions opts;
  opts.gate = gate;
  BranchAttention<T> attn(channels, kinds, opts, seed);
  return attn.forward(branches);
}

template std::unique_ptr<Module<float>> make_attention(AttentionKind, const std::string&, int,
                                                       AttentionOptions, std::uint64_t);
template std::unique_ptr<Module<double>> make_attention(AttentionKind, const std::string&, int,
                                                        AttentionOptions, std::uint64_t);
template std::vector<Tensor<float>> per_branch_attention(const std::vector<Tensor<float>>&,
                                                         const std::vector<AttentionKind>&,
                                                         GateKind, std::uint64_t);
template std::vector<Tensor<double>> per_branch_attention(const std::vector<Tensor<double>>&,
                                                          const std::vector<AttentionKind>&,
                                                          GateKind, std::uint64_t);
template class Stage<float>;
template class Stage<double>;
template class Backbone<float>;
template class Backbone<double>;
template class BranchAttention<float>;
template class BranchAttention<double>;

}  // namespace moonnet
