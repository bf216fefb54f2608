#include <benchmark/benchmark.h>

#include <random>

#include "moonnet/attention.hpp"
#include "moonnet/backbone.hpp"
#include "moonnet/metrics.hpp"
#include "moonnet/ops.hpp"
#include "moonnet/rng.hpp"

using namespace moonnet;

namespace {

void BM_Conv2d3x3(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int hw = static_cast<int>(state.range(1));
  Rng rng(0);
  const auto x = random_tensor<float>(Shape{1, c, hw, hw}, rng, -1, 1);
  const auto k = random_tensor<float>(Shape{c, c, 3, 3}, rng, -0.1, 0.1);
  const Tensor<float> b(Shape{c, 1, 1, 1});
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, b, ConvGeometry{1, 1}));
  state.SetItemsProcessed(state.iterations() * int64_t{c} * c * 9 * hw * hw);
}
BENCHMARK(BM_Conv2d3x3)->Args({16, 32})->Args({64, 16})->Args({128, 8});

template <class Block>
void attention_forward(benchmark::State& state, GateKind gate) {
  const int c = static_cast<int>(state.range(0));
  Block block("att", c, AttentionOptions{16, 7, gate}, 1);
  Rng rng(2);
  const auto x = random_tensor<float>(Shape{4, c, 16, 16}, rng, -1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(block.forward(x));
}
void BM_SEForward(benchmark::State& s) { attention_forward<SEBlock<float>>(s, GateKind::ResidualTanh); }
void BM_CBAMForward(benchmark::State& s) { attention_forward<CBAM<float>>(s, GateKind::ResidualTanh); }
BENCHMARK(BM_SEForward)->Arg(64)->Arg(256);
BENCHMARK(BM_CBAMForward)->Arg(64)->Arg(256);

void BM_BackboneForward(benchmark::State& state) {
  const auto design = build_design(static_cast<int>(state.range(0)), 0.25, GateKind::ResidualTanh);
  Backbone<float> bb(design, 0);
  bb.set_training(false);
  Rng rng(3);
  const auto x = random_tensor<float>(Shape{1, 3, 64, 64}, rng, 0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(bb.forward_all(x));
}
BENCHMARK(BM_BackboneForward)->Arg(0)->Arg(5)->Unit(benchmark::kMillisecond);

EvalInput random_eval(int images, int per_image) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> pos(0, 600), side(4, 40), score(0, 1);
  std::uniform_int_distribution<int> cls(0, 9);
  EvalInput in;
  in.num_classes = 10;
  for (int i = 0; i < images; ++i) {
    ImageDetections d;
    for (int k = 0; k < per_image; ++k) {
      BBox g;
      g.x1 = pos(rng);
      g.y1 = pos(rng);
      g.x2 = g.x1 + side(rng);
      g.y2 = g.y1 + side(rng);
      g.class_id = cls(rng);
      d.gts.push_back(g);
      BBox p = g;
      p.x1 += side(rng) * 0.2;
      p.y2 += side(rng) * 0.2;
      p.score = score(rng);
      if (k % 3 == 0) p.class_id = cls(rng);
      d.preds.push_back(p);
    }
    in.images.push_back(std::move(d));
  }
  return in;
}

void BM_CocoAp(benchmark::State& state) {
  const auto in = random_eval(static_cast<int>(state.range(0)), 50);
  for (auto _ : state) benchmark::DoNotOptimize(coco_ap(in));
}
BENCHMARK(BM_CocoAp)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
