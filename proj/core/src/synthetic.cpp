#include "moonnet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "moonnet/errors.hpp"
#include "moonnet/rng.hpp"

namespace moonnet {

namespace {

constexpr int kTextureBlock = 8;

void require_size(int size) {
  if (size < kCellSize || size % kCellSize != 0) {
    throw ConfigError("synthetic input size must be a positive multiple of 32, got " +
                      std::to_string(size));
  }
}

}  // namespace

int max_patch_side(int size) {
  const int scaled = size * 32 / 640;
  return std::min(7, std::max(3, scaled));
}

SyntheticSample make_synthetic_sample(int size, std::uint64_t seed, std::uint64_t index) {
  require_size(size);
  Rng rng(mix_seed(mix_seed(seed, "synthetic"), index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Blocky low-frequency texture plus per-pixel grain, kept well below the
  // patch brightness.
  const int blocks = (size + kTextureBlock - 1) / kTextureBlock;
  std::vector<double> texture(static_cast<std::size_t>(blocks) * blocks);
  for (double& t : texture) t = 0.1 + 0.35 * unit(rng);

  SyntheticSample s{LabeledImage{Tensor4(Shape{1, 3, size, size}), {}},
                    Tensor4(Shape{1, 1, size / kCellSize, size / kCellSize})};
  for (int c = 0; c < 3; ++c) {
    for (int h = 0; h < size; ++h) {
      for (int w = 0; w < size; ++w) {
        const double base = texture[(h / kTextureBlock) * blocks + w / kTextureBlock];
        s.image.image(0, c, h, w) = static_cast<float>(base + 0.1 * (unit(rng) - 0.5));
      }
    }
  }

  const int grid = size / kCellSize;
  const int max_side = max_patch_side(size);
  std::uniform_int_distribution<int> side_dist(3, max_side);
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      if (unit(rng) >= 0.5) continue;
      const int side = side_dist(rng);
      std::uniform_int_distribution<int> off(0, kCellSize - side);
      const int x0 = gx * kCellSize + off(rng);
      const int y0 = gy * kCellSize + off(rng);
      const double level = 0.85 + 0.15 * unit(rng);
      for (int c = 0; c < 3; ++c) {
        for (int h = y0; h < y0 + side; ++h) {
          for (int w = x0; w < x0 + side; ++w) s.image.image(0, c, h, w) = static_cast<float>(level);
        }
      }
      BBox b;
      b.x1 = x0;
      b.y1 = y0;
      b.x2 = x0 + side;
      b.y2 = y0 + side;
      s.image.boxes.push_back(b);
      s.presence(0, 0, gy, gx) = 1.0f;
    }
  }
  return s;
}

Tensor4 presence_from_boxes(const std::vector<BBox>& boxes, int size) {
  require_size(size);
  const int grid = size / kCellSize;
  Tensor4 p(Shape{1, 1, grid, grid});
  for (const BBox& b : boxes) {
    const int gx = static_cast<int>(std::floor((b.x1 + b.x2) / 2.0 / kCellSize));
    const int gy = static_cast<int>(std::floor((b.y1 + b.y2) / 2.0 / kCellSize));
    if (gx >= 0 && gx < grid && gy >= 0 && gy < grid) p(0, 0, gy, gx) = 1.0f;
  }
  return p;
}

Batch stack_batch(const std::vector<SyntheticSample>& samples) {
  if (samples.empty()) throw ShapeError("stack_batch: empty batch");
  const Shape is = samples.front().image.image.shape();
  const Shape ps = samples.front().presence.shape();
  const int n = static_cast<int>(samples.size());
  Batch b{Tensor4(Shape{n, is.c, is.h, is.w}), Tensor4(Shape{n, ps.c, ps.h, ps.w})};
  for (int i = 0; i < n; ++i) {
    const auto& s = samples[i];
    if (s.image.image.shape() != is || s.presence.shape() != ps) {
      throw ShapeError("stack_batch: samples differ in shape");
    }
    std::copy(s.image.image.values().begin(), s.image.image.values().end(),
              b.images.data() + b.images.offset(i, 0, 0, 0));
    std::copy(s.presence.values().begin(), s.presence.values().end(),
              b.targets.data() + b.targets.offset(i, 0, 0, 0));
  }
  return b;
}

}  // namespace moonnet
