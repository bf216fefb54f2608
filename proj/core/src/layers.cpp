#include "moonnet/layers.hpp"

#include <cmath>

#include "moonnet/rng.hpp"

namespace moonnet {

template <typename T>
std::vector<Param<T>*> Module<T>::params() {
  std::vector<Param<T>*> out;
  collect_params(out);
  return out;
}

template <typename T>
std::vector<Buffer<T>*> Module<T>::buffers() {
  std::vector<Buffer<T>*> out;
  collect_buffers(out);
  return out;
}

template <typename T>
void Module<T>::zero_grad() {
  for (Param<T>* p : params()) p->grad.fill(T(0));
}

template <typename T>
std::size_t Module<T>::parameter_count() {
  std::size_t total = 0;
  for (Param<T>* p : params()) total += p->value.size();
  return total;
}

// --- Conv2d ------------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(const std::string& name, int c_in, int c_out, int kernel, ConvGeometry geom,
                  std::uint64_t seed)
    : kernel_(name + ".weight", Shape{c_out, c_in, kernel, kernel}),
      bias_(name + ".bias", vector_shape(c_out)),
      geom_(geom) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(c_in * kernel * kernel));
  Rng wrng(mix_seed(seed, kernel_.name));
  fill_uniform(kernel_.value, -bound, bound, wrng);
  Rng brng(mix_seed(seed, bias_.name));
  fill_uniform(bias_.value, -bound, bound, brng);
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  input_ = x;
  return conv2d(x, kernel_.value, bias_.value, geom_);
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  ConvGrads<T> g = conv2d_backward(grad_out, input_, kernel_.value, geom_);
  add_inplace(kernel_.grad, g.dkernel);
  add_inplace(bias_.grad, g.dbias);
  return std::move(g.dx);
}

template <typename T>
void Conv2d<T>::collect_params(std::vector<Param<T>*>& out) {
  out.push_back(&kernel_);
  out.push_back(&bias_);
}

// --- BatchNorm2d -------------------------------------------------------------

template <typename T>
BatchNorm2d<T>::BatchNorm2d(const std::string& name, int channels, T eps, T momentum)
    : gamma_(name + ".gamma", vector_shape(channels)),
      beta_(name + ".beta", vector_shape(channels)),
      running_mean_{name + ".running_mean", Tensor<T>(vector_shape(channels))},
      running_var_{name + ".running_var", Tensor<T>(vector_shape(channels), T(1))},
      eps_(eps),
      momentum_(momentum) {
  gamma_.value.fill(T(1));
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x) {
  if (!training_) {
    return batchnorm_eval(x, gamma_.value, beta_.value, running_mean_.value, running_var_.value,
                          eps_);
  }
  std::vector<T> mean;
  std::vector<T> var;
  Tensor<T> y = batchnorm_train(x, gamma_.value, beta_.value, eps_, &cache_, &mean, &var);
  const std::size_t count = x.shape().n * x.shape().plane();
  const T unbias = count > 1 ? static_cast<T>(count) / static_cast<T>(count - 1) : T(1);
  for (std::size_t c = 0; c < mean.size(); ++c) {
    running_mean_.value[c] = (T(1) - momentum_) * running_mean_.value[c] + momentum_ * mean[c];
    running_var_.value[c] =
        (T(1) - momentum_) * running_var_.value[c] + momentum_ * var[c] * unbias;
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& grad_out) {
  BatchNormGrads<T> g = batchnorm_backward(grad_out, cache_, gamma_.value);
  add_inplace(gamma_.grad, g.dgamma);
  add_inplace(beta_.grad, g.dbeta);
  return std::move(g.dx);
}

template <typename T>
void BatchNorm2d<T>::collect_params(std::vector<Param<T>*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

template <typename T>
void BatchNorm2d<T>::collect_buffers(std::vector<Buffer<T>*>& out) {
  out.push_back(&running_mean_);
  out.push_back(&running_var_);
}

// --- ConvBnAct ---------------------------------------------------------------

template <typename T>
ConvBnAct<T>::ConvBnAct(const std::string& name, int c_in, int c_out, int kernel, int stride,
                        std::uint64_t seed)
    : conv_(name + ".conv", c_in, c_out, kernel, ConvGeometry{stride, (kernel - 1) / 2}, seed),
      bn_(name + ".bn", c_out) {}

template <typename T>
Tensor<T> ConvBnAct<T>::forward(const Tensor<T>& x) {
  pre_act_ = bn_.forward(conv_.forward(x));
  return silu(pre_act_);
}

template <typename T>
Tensor<T> ConvBnAct<T>::backward(const Tensor<T>& grad_out) {
  return conv_.backward(bn_.backward(silu_backward(grad_out, pre_act_)));
}

template <typename T>
void ConvBnAct<T>::collect_params(std::vector<Param<T>*>& out) {
  conv_.collect_params(out);
  bn_.collect_params(out);
}

template <typename T>
void ConvBnAct<T>::collect_buffers(std::vector<Buffer<T>*>& out) {
  bn_.collect_buffers(out);
}

// --- Bottleneck --------------------------------------------------------------

template <typename T>
Bottleneck<T>::Bottleneck(const std::string& name, int channels, std::uint64_t seed)
    : cv1_(name + ".cv1", channels, channels, 3, 1, seed),
      cv2_(name + ".cv2", channels, channels, 3, 1, seed) {}

template <typename T>
Tensor<T> Bottleneck<T>::forward(const Tensor<T>& x) {
  return add(x, cv2_.forward(cv1_.forward(x)));
}

template <typename T>
Tensor<T> Bottleneck<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dx = cv1_.backward(cv2_.backward(grad_out));
  add_inplace(dx, grad_out);
  return dx;
}

template <typename T>
void Bottleneck<T>::collect_params(std::vector<Param<T>*>& out) {
  cv1_.collect_params(out);
  cv2_.collect_params(out);
}

template <typename T>
void Bottleneck<T>::collect_buffers(std::vector<Buffer<T>*>& out) {
  cv1_.collect_buffers(out);
  cv2_.collect_buffers(out);
}

template <typename T>
void Bottleneck<T>::set_training(bool training) {
  cv1_.set_training(training);
  cv2_.set_training(training);
}

// --- C2f ---------------------------------------------------------------------

namespace {

int c2f_hidden(int c_out) { return c_out >= 2 ? c_out / 2 : 1; }

}  // namespace

template <typename T>
C2f<T>::C2f(const std::string& name, int c_in, int c_out, int bottlenecks, std::uint64_t seed)
    : hidden_(c2f_hidden(c_out)),
      cv1_(name + ".cv1", c_in, 2 * hidden_, 1, 1, seed),
      cv2_(name + ".cv2", (2 + bottlenecks) * hidden_, c_out, 1, 1, seed) {
  if (bottlenecks < 0) throw ShapeError("C2f: negative bottleneck count");
  for (int i = 0; i < bottlenecks; ++i) {
    blocks_.push_back(
        std::make_unique<Bottleneck<T>>(name + ".m" + std::to_string(i), hidden_, seed));
  }
}

template <typename T>
Tensor<T> C2f<T>::forward(const Tensor<T>& x) {
  auto [a, b] = split_channels(cv1_.forward(x), hidden_);
  Tensor<T> cat = concat_channels(a, b);
  Tensor<T> last = std::move(b);
  for (auto& block : blocks_) {
    last = block->forward(last);
    cat = concat_channels(cat, last);
  }
  return cv2_.forward(cat);
}

template <typename T>
Tensor<T> C2f<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> dcat = cv2_.backward(grad_out);
  // Peel chunks off the end of [a, b, m1, ..., mk] in reverse.
  Tensor<T> dlast;
  bool have_dlast = false;
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    auto [rest, dchunk] = split_channels(dcat, dcat.shape().c - hidden_);
    if (have_dlast) add_inplace(dchunk, dlast);
    dlast = blocks_[i]->backward(dchunk);
    have_dlast = true;
    dcat = std::move(rest);
  }
  auto [da, db] = split_channels(dcat, hidden_);
  if (have_dlast) add_inplace(db, dlast);
  return cv1_.backward(concat_channels(da, db));
}

template <typename T>
void C2f<T>::collect_params(std::vector<Param<T>*>& out) {
  cv1_.collect_params(out);
  for (auto& b : blocks_) b->collect_params(out);
  cv2_.collect_params(out);
}

template <typename T>
void C2f<T>::collect_buffers(std::vector<Buffer<T>*>& out) {
  cv1_.collect_buffers(out);
  for (auto& b : blocks_) b->collect_buffers(out);
  cv2_.collect_buffers(out);
}

template <typename T>
void C2f<T>::set_training(bool training) {
  cv1_.set_training(training);
  for (auto& b : blocks_) b->set_training(training);
  cv2_.set_training(training);
}

template class Module<float>;
template class Module<double>;
template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class ConvBnAct<float>;
template class ConvBnAct<double>;
template class Bottleneck<float>;
template class Bottleneck<double>;
template class C2f<float>;
template class C2f<double>;

}  // namespace moonnet
