// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 iff all pass.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "metrics_reference.hpp"
#include "moonnet/attention.hpp"
#include "moonnet/augment.hpp"
#include "moonnet/backbone.hpp"
#include "moonnet/checkpoint.hpp"
#include "moonnet/dataset_io.hpp"
#include "moonnet/gradcheck.hpp"
#include "moonnet/metrics.hpp"
#include "moonnet/rng.hpp"
#include "moonnet/train.hpp"

using namespace moonnet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double limit_seconds;  // 0: no runtime bound
  std::function<Outcome()> run;
};

const Shape kIdentityShapes[] = {Shape{1, 8, 4, 4}, Shape{2, 16, 8, 8}, Shape{1, 64, 2, 2}};
constexpr int kIdentityInputs = 100;

Outcome identity_at_init() {
  float worst = 0.0f;
  for (int i = 0; i < kIdentityInputs; ++i) {
    const Shape s = kIdentityShapes[i % 3];
    const auto seed = mix_seed(2024, static_cast<std::uint64_t>(i));
    SEBlock<float> se("se", s.c, AttentionOptions{16, 7, GateKind::ResidualTanh}, seed);
    CBAM<float> cb("cbam", s.c, AttentionOptions{16, 7, GateKind::ResidualTanh}, seed);
    identity_safe_init(se, seed);
    identity_safe_init(cb, seed);
    Rng rng(seed);
    const auto x = random_tensor<float>(s, rng, -4.0, 4.0);
    for (const auto& y : {se.forward(x), cb.forward(x)}) {
      for (std::size_t k = 0; k < x.size(); ++k) worst = std::max(worst, std::abs(y[k] - x[k]));
    }
  }
  std::ostringstream d;
  d << kIdentityInputs << " inputs x {SE, CBAM}, max|y-x| = " << worst;
  return {worst == 0.0f, d.str()};
}

bool within_one_ulp(float got, float want) {
  return got == want || got == std::nextafter(want, INFINITY) || got == std::nextafter(want, -INFINITY);
}

Outcome sigmoid_halving() {
  std::size_t bad = 0, checked = 0;
  for (int i = 0; i < kIdentityInputs; ++i) {
    const Shape s = kIdentityShapes[i % 3];
    const auto seed = mix_seed(2025, static_cast<std::uint64_t>(i));
    const AttentionOptions o{16, 7, GateKind::SigmoidOriginal};
    SEBlock<float> se("se", s.c, o, seed);
    CBAM<float> cb("cbam", s.c, o, seed);
    identity_safe_init(se, seed);
    identity_safe_init(cb, seed);
    Rng rng(seed);
    const auto x = random_tensor<float>(s, rng, -4.0, 4.0);
    const auto ys = se.forward(x);
    const auto yc = cb.forward(x);
    for (std::size_t k = 0; k < x.size(); ++k) {
      bad += within_one_ulp(ys[k], 0.5f * x[k]) ? 0 : 1;
      bad += within_one_ulp(yc[k], 0.25f * x[k]) ? 0 : 1;
      checked += 2;
    }
  }
  std::ostringstream d;
  d << checked << " elements, " << bad << " off by more than 1 ulp (SE y = x/2, CBAM y = x/4)";
  return {bad == 0, d.str()};
}

Outcome gradient_correctness() {
  const auto reports = run_gradcheck_suite(0);
  double worst = 0.0;
  std::size_t passed = 0;
  for (const auto& r : reports) {
    worst = std::max(worst, r.max_rel_err);
    passed += r.pass ? 1 : 0;
  }
  std::ostringstream d;
  d << passed << "/" << reports.size() << " sites pass, worst rel err " << std::scientific
    << std::setprecision(2) << worst;
  return {all_pass(reports) && reports.size() >= 30, d.str()};
}

Outcome m_rule() {
  struct Case {
    int c, r, m;
  };
  std::vector<Case> cases = {{64, 16, 8}, {256, 16, 16}, {8, 4, 8}};
  for (int r : {1, 2, 4, 16, 64, 1000}) cases.push_back({1, r, 8});
  std::ostringstream d;
  bool ok = true;
  for (const auto& c : cases) {
    SEBlock<float> se("se", c.c, AttentionOptions{c.r, 7, GateKind::ResidualTanh}, 0);
    const int got = se.mlp().hidden();
    const bool shape_ok = se.mlp().fc1_weight().value.shape() == Shape(c.m, c.c, 1, 1);
    ok = ok && got == c.m && shape_ok;
    if (got != c.m || !shape_ok) d << "(" << c.c << "," << c.r << ")->" << got << " ";
  }
  if (ok) d << cases.size() << " fixtures reproduced";
  return {ok, d.str()};
}

Outcome channel_ladders() {
  const auto design = build_design(kMoonNetDesign, 0.25, GateKind::ResidualTanh);
  const std::vector<int> want = {32, 64, 128, 256, 512};
  Backbone<float> bb(design, 0);
  Rng rng(1);
  const auto outs = bb.forward_all(random_tensor<float>(Shape{1, 3, 64, 64}, rng, 0, 1));
  std::vector<int> got;
  for (const auto& o : outs) got.push_back(o.shape().c);
  std::ostringstream d;
  d << "stage channels";
  for (int c : got) d << ' ' << c;
  return {design.channels() == want && got == want, d.str()};
}

Outcome metric_oracle() {
  std::mt19937_64 rng(6);
  int mismatches = 0;
  for (int i = 0; i < 50; ++i) {
    const auto in = reference::random_fixture(rng);
    mismatches += average_precision(in, 0.5).mean != reference::mean_ap(in, 0.5);
    mismatches += average_precision(in, 0.75).mean != reference::mean_ap(in, 0.75);
    mismatches += coco_ap(in).ap != reference::coco_ap(in);
  }
  BBox a, b;
  a.x2 = a.y2 = 2;
  b.x1 = b.y1 = 1;
  b.x2 = b.y2 = 3;
  const double err = std::abs(iou(a, b) - 1.0 / 7.0);
  std::ostringstream d;
  d << "50 fixtures, " << mismatches << " AP mismatches; |IoU - 1/7| = " << err;
  return {mismatches == 0 && err <= 1e-12, d.str()};
}

std::string image_bytes(const LabeledImage& li) {
  std::string s(reinterpret_cast<const char*>(li.image.data()), li.image.size() * sizeof(float));
  return s + format_annotations(li.boxes);
}

Outcome augmentation_properties() {
  int failures = 0;
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Rng rng(seed);
    const int h = 8 + static_cast<int>(seed % 5), w = 10 + static_cast<int>(seed % 3);
    LabeledImage li{random_tensor<float>(Shape{1, 3, h, w}, rng, 0, 1), {}};
    std::uniform_int_distribution<int> q(0, 12), e(1, 12);
    for (int k = 0; k < 5; ++k) {
      BBox b;
      b.x1 = q(rng) * 0.5;
      b.y1 = q(rng) * 0.25;
      b.x2 = b.x1 + e(rng) * 0.25;
      b.y2 = b.y1 + e(rng) * 0.5;
      li.boxes.push_back(b);
    }
    failures += !(hflip(hflip(li)) == li);
    failures += !(vflip(vflip(li)) == li);
    failures += !(rotate90(rotate90(li, 1), 3) == li);
    failures += !(rotate90(rotate90(rotate90(rotate90(li, 1), 1), 1), 1) == li);
    failures += !(rotate90(li, 0) == li);
    failures += !(photometric(li, 0.0, 1.0, 0.0, seed) == li);
    failures += !(box_jitter(li, 0.0, seed) == li);
    failures += !(apply_package(AugmentPackage::Ver1, li, seed) == li);
    failures += image_bytes(apply_package(AugmentPackage::Ver3, li, 77)) !=
                image_bytes(apply_package(AugmentPackage::Ver3, li, 77));
  }
  std::ostringstream d;
  d << "25 images x 9 properties, " << failures << " failures";
  return {failures == 0, d.str()};
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome checkpoint_round_trip() {
  const fs::path dir = fs::temp_directory_path() / "moonnet_acceptance_ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);
  ExperimentConfig cfg;
  PresenceNet net = build_model(cfg);
  Rng rng(8);
  net.set_training(true);
  net.forward(random_tensor<float>(Shape{4, 3, 64, 64}, rng, 0, 1));  // moves BN running stats
  for (auto* p : net.params()) {
    for (float& v : p->value.values()) v += static_cast<float>(std::uniform_real_distribution<>(-0.05, 0.05)(rng));
  }
  net.set_training(false);
  const auto x = random_tensor<float>(Shape{2, 3, 64, 64}, rng, 0, 1);
  const auto before = net.forward(x);

  Checkpoint ck = capture(net);
  ck.config_text = cfg.to_text();
  save_checkpoint(ck, (dir / "a.ckpt").string());
  const Checkpoint loaded = load_checkpoint((dir / "a.ckpt").string());
  save_checkpoint(loaded, (dir / "b.ckpt").string());
  const bool bytes_equal = file_bytes(dir / "a.ckpt") == file_bytes(dir / "b.ckpt");

  PresenceNet fresh = build_model(cfg);
  restore(fresh, loaded);
  fresh.set_training(false);
  const auto after = fresh.forward(x);
  const bool bitwise =
      std::memcmp(before.data(), after.data(), before.size() * sizeof(float)) == 0;
  std::ostringstream d;
  d << ck.tensors.size() << " tensors, " << fs::file_size(dir / "a.ckpt") << " bytes; resave "
    << (bytes_equal ? "identical" : "DIFFERS") << ", forward " << (bitwise ? "bitwise equal" : "DIFFERS");
  return {bytes_equal && bitwise, d.str()};
}

std::vector<double> window_means(const std::vector<double>& losses, int windows, int width) {
  std::vector<double> m;
  for (int w = 0; w < windows; ++w) {
    double s = 0.0;
    for (int i = 0; i < width; ++i) s += losses.at(static_cast<std::size_t>(w * width + i));
    m.push_back(s / width);
  }
  return m;
}

bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i] < v[i - 1])) return false;
  }
  return true;
}

Outcome training_smoke() {
  TrainOptions quiet;
  quiet.write_files = false;

  ExperimentConfig cfg;  // design 5, residual-tanh, 64x64, width 0.25, seed 0
  cfg.steps_per_epoch = 2000;
  const auto run = train(cfg, quiet);
  const auto rerun = train(cfg, quiet);
  const bool deterministic = run.losses == rerun.losses && run.log == rerun.log;
  const bool reached = run.final_accuracy >= 0.95 && run.steps <= 2000;

  std::ostringstream d;
  d << "design 5 acc " << std::fixed << std::setprecision(4) << run.final_accuracy << " at step "
    << run.steps << (deterministic ? ", rerun identical" : ", rerun DIFFERS");

  bool decreasing = true;
  for (int design : {0, 5}) {
    ExperimentConfig c = cfg;
    c.design_id = design;
    c.steps_per_epoch = 100;
    c.target_accuracy = 0.0;
    const auto r = train(c, quiet);
    const auto m = window_means(r.losses, 5, 20);
    const bool ok = strictly_decreasing(m);
    decreasing = decreasing && ok;
    d << "; d" << design << " 20-step means" << std::setprecision(3);
    for (double v : m) d << ' ' << v;
    d << (ok ? "" : " (NOT decreasing)");
  }
  return {reached && deterministic && decreasing, d.str()};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "identity at init (ResidualTanh SE/CBAM)", 5, identity_at_init},
      {2, "sigmoid halving (SigmoidOriginal SE/CBAM)", 5, sigmoid_halving},
      {3, "gradient correctness (gradcheck suite)", 120, gradient_correctness},
      {4, "bottleneck width m = max(8, floor(C/r))", 1, m_rule},
      {5, "channel ladder, design 5 at width 0.25", 1, channel_ladders},
      {6, "metric oracle equivalence", 10, metric_oracle},
      {7, "augmentation properties", 10, augmentation_properties},
      {8, "checkpoint round trip", 10, checkpoint_round_trip},
      {9, "desk-scale training smoke", 600, training_smoke},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.limit_seconds <= 0 || secs < c.limit_seconds;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::cout << (pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.title << ": " << o.detail
              << "  (" << std::fixed << std::setprecision(2) << secs << " s, limit "
              << std::setprecision(0) << c.limit_seconds << " s"
              << (in_time ? "" : ", OVER TIME") << ")" << std::endl;
  }
  std::cout << "NOTE  [10] not reproducible at desk scale: full-size detection AP on DOTA 2.0 and VisDrone needs the "
               "datasets and GPU training; `moonnet sweep` and `moonnet train --augment/--design` "
               "reproduce the protocols only"
            << std::endl;
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
