#include <gtest/gtest.h>

#include <cmath>

#include "moonnet/attention.hpp"
#include "moonnet/errors.hpp"
#include "moonnet/rng.hpp"
#include "moonnet/train.hpp"
#include "oracles.hpp"

using namespace moonnet;

namespace {

template <typename M>
void perturb(M& module, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  for (auto* p : module.params()) fill_uniform(p->value, -scale, scale, rng);
}

// Channel gate from avg and max statistics through one shared MLP, then a
// spatial gate from a k x k conv over [mean_c, max_c] of the gated tensor.
Tensor<double> cbam_oracle(const Tensor<double>& x, CBAM<double>& m, bool tanh_gate) {
  auto& mlp = m.mlp();
  const auto& w1 = mlp.fc1_weight().value;
  const auto& b1 = mlp.fc1_bias().value;
  const auto& w2 = mlp.fc2_weight().value;
  const auto& b2 = mlp.fc2_bias().value;
  const auto& ks = m.spatial_kernel().value;
  const double kb = m.spatial_bias().value[0];
  const int k = m.spatial_kernel_size();
  const int pad = (k - 1) / 2;
  const Shape s = x.shape();
  const int hid = mlp.hidden();
  auto gate = [&](double z) { return tanh_gate ? 1.0 + std::tanh(z) : oracle::sigmoid(z); };
  auto mlp_apply = [&](const std::vector<double>& v) {
    std::vector<double> h(hid), out(s.c);
    for (int j = 0; j < hid; ++j) {
      double a = b1[j];
      for (int c = 0; c < s.c; ++c) a += w1(j, c, 0, 0) * v[c];
      h[j] = std::max(a, 0.0);
    }
    for (int c = 0; c < s.c; ++c) {
      double a = b2[c];
      for (int j = 0; j < hid; ++j) a += w2(c, j, 0, 0) * h[j];
      out[c] = a;
    }
    return out;
  };

  Tensor<double> xc(s), y(s);
  for (int n = 0; n < s.n; ++n) {
    std::vector<double> avg(s.c, 0.0), mx(s.c, -INFINITY);
    for (int c = 0; c < s.c; ++c)
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w) {
          avg[c] += x(n, c, h, w) / (s.h * s.w);
          mx[c] = std::max(mx[c], x(n, c, h, w));
        }
    const auto za = mlp_apply(avg);
    const auto zm = mlp_apply(mx);
    for (int c = 0; c < s.c; ++c)
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w) xc(n, c, h, w) = x(n, c, h, w) * gate(za[c] + zm[c]);

    std::vector<double> mean_map(s.h * s.w, 0.0), max_map(s.h * s.w, -INFINITY);
    for (int h = 0; h < s.h; ++h)
      for (int w = 0; w < s.w; ++w)
        for (int c = 0; c < s.c; ++c) {
          mean_map[h * s.w + w] += xc(n, c, h, w) / s.c;
          max_map[h * s.w + w] = std::max(max_map[h * s.w + w], xc(n, c, h, w));
        }
    for (int h = 0; h < s.h; ++h)
      for (int w = 0; w < s.w; ++w) {
        double z = kb;
        for (int u = 0; u < k; ++u)
          for (int v = 0; v < k; ++v) {
            const int r = h - pad + u, q = w - pad + v;
            if (r < 0 || r >= s.h || q < 0 || q >= s.w) continue;
            z += ks(0, 0, u, v) * mean_map[r * s.w + q] + ks(0, 1, u, v) * max_map[r * s.w + q];
          }
        for (int c = 0; c < s.c; ++c) y(n, c, h, w) = xc(n, c, h, w) * gate(z);
      }
  }
  return y;
}

const GateKind kGates[] = {GateKind::SigmoidOriginal, GateKind::ResidualTanh};

}  // namespace

TEST(BottleneckWidth, MaxOfEightAndFloor) {
  EXPECT_EQ(bottleneck_width(64, 16), 8);
  EXPECT_EQ(bottleneck_width(256, 16), 16);
  EXPECT_EQ(bottleneck_width(8, 4), 8);
  EXPECT_EQ(bottleneck_width(1, 16), 8);
  EXPECT_EQ(bottleneck_width(1, 1), 8);
  EXPECT_EQ(bottleneck_width(300, 16), 18);
  EXPECT_THROW(bottleneck_width(64, 0), ConfigError);
  EXPECT_THROW(bottleneck_width(0, 16), ConfigError);
}

TEST(Gate, MultipliersAtZeroAreExact) {
  EXPECT_EQ(gate_multiplier(GateKind::SigmoidOriginal, 0.0f), 0.5f);
  EXPECT_EQ(gate_multiplier(GateKind::ResidualTanh, 0.0f), 1.0f);
  EXPECT_EQ(gate_multiplier(GateKind::SigmoidOriginal, 0.0), 0.5);
  EXPECT_EQ(gate_multiplier(GateKind::ResidualTanh, 0.0), 1.0);
}

TEST(Gate, MultiplierRanges) {
  Rng rng(5);
  std::uniform_real_distribution<double> d(-30, 30);
  for (int i = 0; i < 1000; ++i) {
    const double z = d(rng);
    const double s = gate_multiplier(GateKind::SigmoidOriginal, z);
    const double t = gate_multiplier(GateKind::ResidualTanh, z);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
    EXPECT_GE(t, 0.0);
    EXPECT_LE(t, 2.0);
  }
}

TEST(Gate, ParseNames) {
  EXPECT_EQ(parse_gate_kind("residual-tanh"), GateKind::ResidualTanh);
  EXPECT_EQ(parse_gate_kind("sigmoid"), GateKind::SigmoidOriginal);
  EXPECT_THROW(parse_gate_kind("softmax"), ConfigError);
  EXPECT_EQ(parse_gate_kind(to_string(GateKind::SigmoidOriginal)), GateKind::SigmoidOriginal);
}

TEST(SE, ForwardMatchesScalarOracle) {
  for (GateKind g : kGates) {
    for (Shape s : {Shape{1, 8, 4, 4}, Shape{2, 20, 3, 5}}) {
      SEBlock<double> se("se", s.c, AttentionOptions{4, 7, g}, 1);
      perturb(se, 2);
      Rng rng(3);
      const auto x = random_tensor<double>(s, rng);
      const auto y = se.forward(x);
      auto& m = se.mlp();
      const auto want = oracle::se(x, m.fc1_weight().value, m.fc1_bias().value,
                                   m.fc2_weight().value, m.fc2_bias().value,
                                   g == GateKind::ResidualTanh);
      for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], want[i], 1e-13);
    }
  }
}

TEST(CBAM, ForwardMatchesScalarOracle) {
  for (GateKind g : kGates) {
    for (int k : {3, 7}) {
      const Shape s{2, 9, 5, 4};
      CBAM<double> cb("cbam", s.c, AttentionOptions{2, k, g}, 4);
      perturb(cb, 5);
      Rng rng(6);
      const auto x = random_tensor<double>(s, rng);
      const auto y = cb.forward(x);
      const auto want = cbam_oracle(x, cb, g == GateKind::ResidualTanh);
      for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], want[i], 1e-13);
    }
  }
}

TEST(CBAM, RejectsEvenKernel) {
  EXPECT_THROW(CBAM<float>("c", 8, AttentionOptions{16, 4, GateKind::ResidualTanh}, 0),
               ConfigError);
}

TEST(Attention, ShapeMismatchThrows) {
  SEBlock<float> se("se", 8, {}, 0);
  EXPECT_THROW(se.forward(Tensor4(Shape{1, 4, 2, 2})), ShapeError);
  CBAM<float> cb("cb", 8, {}, 0);
  EXPECT_THROW(cb.forward(Tensor4(Shape{1, 4, 2, 2})), ShapeError);
}

TEST(IdentityInit, ZeroesSecondLayerAndSpatialConv) {
  CBAM<float> cb("cb", 16, {}, 7);
  perturb(cb, 8);
  identity_safe_init(cb, 9);
  for (float v : cb.mlp().fc2_weight().value.values()) EXPECT_EQ(v, 0.0f);
  for (float v : cb.mlp().fc2_bias().value.values()) EXPECT_EQ(v, 0.0f);
  for (float v : cb.spatial_kernel().value.values()) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(cb.spatial_bias().value[0], 0.0f);
  const float bound = 1.0f / 4.0f;
  bool any_nonzero = false;
  for (float v : cb.mlp().fc1_weight().value.values()) {
    EXPECT_LE(std::abs(v), bound);
    any_nonzero = any_nonzero || v != 0.0f;
  }
  EXPECT_TRUE(any_nonzero);
}

TEST(IdentityInit, ResidualTanhIsExactIdentity) {
  for (Shape s : {Shape{1, 8, 4, 4}, Shape{2, 16, 8, 8}, Shape{1, 64, 2, 2}}) {
    SEBlock<float> se("se", s.c, {}, 11);
    CBAM<float> cb("cb", s.c, {}, 11);
    for (int trial = 0; trial < 10; ++trial) {
      Rng rng(mix_seed(100, trial));
      const auto x = random_tensor<float>(s, rng, -10, 10);
      EXPECT_EQ(se.forward(x), x);
      EXPECT_EQ(cb.forward(x), x);
    }
  }
}

TEST(IdentityInit, SigmoidHalvesAndQuarters) {
  const Shape s{2, 16, 8, 8};
  AttentionOptions o{16, 7, GateKind::SigmoidOriginal};
  SEBlock<float> se("se", s.c, o, 12);
  CBAM<float> cb("cb", s.c, o, 12);
  Rng rng(13);
  const auto x = random_tensor<float>(s, rng);
  const auto ys = se.forward(x);
  const auto yc = cb.forward(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(ys[i], 0.5f * x[i]);
    EXPECT_EQ(yc[i], 0.25f * x[i]);
  }
}

TEST(IdentityInit, OneSgdStepActivatesTheGate) {
  for (GateKind g : kGates) {
    const Shape s{2, 8, 4, 4};
    CBAM<float> cb("cb", s.c, AttentionOptions{16, 3, g}, 14);
    SEBlock<float> se("se", s.c, AttentionOptions{16, 3, g}, 14);
    Rng rng(15);
    const auto x = random_tensor<float>(s, rng);
    const auto target = random_tensor<float>(s, rng);
    for (Module<float>* m : std::initializer_list<Module<float>*>{&cb, &se}) {
      const auto y0 = m->forward(x);
      Tensor4 grad(s);
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = y0[i] - target[i];
      m->zero_grad();
      m->backward(grad);
      Sgd opt(0.5, 0.0);
      opt.step(m->params());
      const auto y1 = m->forward(x);
      float max_diff = 0.0f;
      for (std::size_t i = 0; i < x.size(); ++i) max_diff = std::max(max_diff, std::abs(y1[i] - y0[i]));
      EXPECT_GT(max_diff, 0.0f);
    }
  }
}
