#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "moonnet/ops.hpp"
#include "moonnet/tensor.hpp"

namespace moonnet {

/// Learnable tensor with its accumulated gradient.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}
};

/// Non-learnable state that still belongs in a checkpoint (BN running stats).
template <typename T>
struct Buffer {
  std::string name;
  Tensor<T> value;
};

/// A layer or composite block with an explicit backward pass.
///
/// forward() caches whatever backward() needs, so the two must be called in
/// strict alternation on one instance. backward() accumulates into the
/// parameter gradients and returns the gradient with respect to the input.
template <typename T>
class Module {
 public:
  virtual ~Module() = default;

  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual void collect_params(std::vector<Param<T>*>& out) = 0;
  virtual void collect_buffers(std::vector<Buffer<T>*>& out) { (void)out; }
  virtual void set_training(bool training) { (void)training; }

  /// Distance of the last forward pass from the nearest non-differentiable
  /// point (ReLU at 0, ties in a max). +inf for smooth modules.
  virtual double kink_margin() const { return std::numeric_limits<double>::infinity(); }

  std::vector<Param<T>*> params();
  std::vector<Buffer<T>*> buffers();
  void zero_grad();
  std::size_t parameter_count();
};

template <typename T>
class Identity final : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override { return x; }
  Tensor<T> backward(const Tensor<T>& grad_out) override { return grad_out; }
  void collect_params(std::vector<Param<T>*>&) override {}
};

template <typename T>
class Conv2d final : public Module<T> {
 public:
  Conv2d(const std::string& name, int c_in, int c_out, int kernel, ConvGeometry geom,
         std::uint64_t seed);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_params(std::vector<Param<T>*>& out) override;

  Param<T>& kernel() { return kernel_; }
  Param<T>& bias() { return bias_; }
  ConvGeometry geometry() const { return geom_; }

 private:
  Param<T> kernel_;
  Param<T> bias_;
  ConvGeometry geom_;
  Tensor<T> input_;
};

template <typename T>
class BatchNorm2d final : public Module<T> {
 public:
  BatchNorm2d(const std::string& name, int channels, T eps = T(1e-5), T momentum = T(0.1));

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  void collect_buffers(std::vector<Buffer<T>*>& out) override;
  void set_training(bool training) override { training_ = training; }

 private:
  Param<T> gamma_;
  Param<T> beta_;
  Buffer<T> running_mean_;
  Buffer<T> running_var_;
  T eps_;
  T momentum_;
  bool training_ = true;
  BatchNormCache<T> cache_;
};

/// conv -> batchnorm -> SiLU.
template <typename T>
class ConvBnAct final : public Module<T> {
 public:
  ConvBnAct(const std::string& name, int c_in, int c_out, int kernel, int stride,
            std::uint64_t seed);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  void collect_buffers(std::vector<Buffer<T>*>& out) override;
  void set_training(bool training) override { bn_.set_training(training); }

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
  Tensor<T> pre_act_;
};

/// Two 3x3 ConvBnAct with a residual add.
template <typename T>
class Bottleneck final : public Module<T> {
 public:
  Bottleneck(const std::string& name, int channels, std::uint64_t seed);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  void collect_buffers(std::vector<Buffer<T>*>& out) override;
  void set_training(bool training) override;

 private:
  ConvBnAct<T> cv1_;
  ConvBnAct<T> cv2_;
};

/// Reduced C2f: 1x1 ConvBnAct, split in halves (a, b), chain `bottlenecks`
/// blocks off b, concatenate [a, b, m1, m2, ...], 1x1 ConvBnAct to c_out.
template <typename T>
class C2f final : public Module<T> {
 public:
  C2f(const std::string& name, int c_in, int c_out, int bottlenecks, std::uint64_t seed);

  Tensor<T> forward(const Tensor<T>& x) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  void collect_buffers(std::vector<Buffer<T>*>& out) override;
  void set_training(bool training) override;

 private:
  int hidden_;
  ConvBnAct<T> cv1_;
  std::vector<std::unique_ptr<Bottleneck<T>>> blocks_;
  ConvBnAct<T> cv2_;
};

extern template class Module<float>;
extern template class Module<double>;
extern template class Conv2d<float>;
extern template class Conv2d<double>;
extern template class BatchNorm2d<float>;
extern template class BatchNorm2d<double>;
extern template class ConvBnAct<float>;
extern template class ConvBnAct<double>;
extern template class Bottleneck<float>;
extern template class Bottleneck<double>;
extern template class C2f<float>;
extern template class C2f<double>;

}  // namespace moonnet
