#include "moonnet/augment.hpp"

#include <algorithm>
#include <random>
#include <string>

#include "moonnet/errors.hpp"
#include "moonnet/rng.hpp"

namespace moonnet {

namespace {

void require_rgb(const LabeledImage& li) {
  const Shape& s = li.image.shape();
  if (s.n != 1 || s.c != 3) throw ShapeError("labeled image must be (1, 3, H, W), got " + s.str());
}

}  // namespace

LabeledImage hflip(const LabeledImage& li) {
  require_rgb(li);
  const Shape& s = li.image.shape();
  LabeledImage out{Tensor4(s), li.boxes};
  for (int c = 0; c < s.c; ++c) {
    for (int h = 0; h < s.h; ++h) {
      for (int w = 0; w < s.w; ++w) out.image(0, c, h, w) = li.image(0, c, h, s.w - 1 - w);
    }
  }
  const double W = s.w;
  for (BBox& b : out.boxes) {
    const double x1 = W - b.x2;
    const double x2 = W - b.x1;
    b.x1 = x1;
    b.x2 = x2;
  }
  return out;
}

LabeledImage vflip(const LabeledImage& li) {
  require_rgb(li);
  const Shape& s = li.image.shape();
  LabeledImage out{Tensor4(s), li.boxes};
  for (int c = 0; c < s.c; ++c) {
    for (int h = 0; h < s.h; ++h) {
      std::copy_n(li.image.data() + li.image.offset(0, c, s.h - 1 - h, 0), s.w,
                  out.image.data() + out.image.offset(0, c, h, 0));
    }
  }
  const double H = s.h;
  for (BBox& b : out.boxes) {
    const double y1 = H - b.y2;
    const double y2 = H - b.y1;
    b.y1 = y1;
    b.y2 = y2;
  }
  return out;
}

LabeledImage rotate90(const LabeledImage& li, int quarter_turns) {
  require_rgb(li);
  if (quarter_turns < 0 || quarter_turns > 3) {
    throw ConfigError("rotate90: quarter_turns must be in 0..3");
  }
  LabeledImage cur = li;
  for (int t = 0; t < quarter_turns; ++t) {
    const Shape& s = cur.image.shape();
    // Counter-clockwise: old (row y, col x) -> new (row W-1-x, col y).
    LabeledImage next{Tensor4(Shape{1, 3, s.w, s.h}), cur.boxes};
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) next.image(0, c, s.w - 1 - x, y) = cur.image(0, c, y, x);
      }
    }
    const double W = s.w;
    for (BBox& b : next.boxes) {
      const BBox o = b;
      b.x1 = o.y1;
      b.x2 = o.y2;
      b.y1 = W - o.x2;
      b.y2 = W - o.x1;
    }
    cur = std::move(next);
  }
  return cur;
}

LabeledImage photometric(const LabeledImage& li, double brightness, double contrast,
                         double noise_sigma, std::uint64_t seed) {
  require_rgb(li);
  if (!(contrast > 0.0)) throw ConfigError("photometric: contrast must be > 0");
  if (noise_sigma < 0.0) throw ConfigError("photometric: noise sigma must be >= 0");
  LabeledImage out = li;
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);
  for (float& p : out.image.values()) {
    double v = contrast * (static_cast<double>(p) - 0.5) + 0.5 + brightness;
    if (noise_sigma > 0.0) v += noise(rng);
    p = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

LabeledImage box_jitter(const LabeledImage& li, double max_fraction, std::uint64_t seed) {
  require_rgb(li);
  if (max_fraction < 0.0) throw ConfigError("box_jitter: fraction must be >= 0");
  LabeledImage out{li.image, {}};
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-max_fraction, max_fraction);
  const double W = li.width();
  const double H = li.height();
  for (const BBox& b : li.boxes) {
    BBox j = b;
    const double bw = b.width();
    const double bh = b.height();
    j.x1 = std::clamp(b.x1 + u(rng) * bw, 0.0, W);
    j.x2 = std::clamp(b.x2 + u(rng) * bw, 0.0, W);
    j.y1 = std::clamp(b.y1 + u(rng) * bh, 0.0, H);
    j.y2 = std::clamp(b.y2 + u(rng) * bh, 0.0, H);
    if (j.valid()) out.boxes.push_back(j);
  }
  return out;
}

std::string_view to_string(AugmentPackage pkg) {
  switch (pkg) {
    case AugmentPackage::Ver2:
      return "ver2";
    case AugmentPackage::Ver3:
      return "ver3";
    case AugmentPackage::Ver1:
      break;
  }
  return "ver1";
}

AugmentPackage parse_augment_package(std::string_view text) {
  if (text == "ver1" || text == "none" || text == "1") return AugmentPackage::Ver1;
  if (text == "ver2" || text == "geo" || text == "2") return AugmentPackage::Ver2;
  if (text == "ver3" || text == "all" || text == "3") return AugmentPackage::Ver3;
  throw ConfigError("unknown augmentation package '" + std::string(text) +
                    "' (expected ver1, ver2 or ver3)");
}

LabeledImage apply_package(AugmentPackage pkg, const LabeledImage& li, std::uint64_t seed,
                           const AugmentParams& params) {
  require_rgb(li);
  if (pkg == AugmentPackage::Ver1) return li;

  Rng rng(mix_seed(seed, "augment"));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  LabeledImage out = li;
  if (coin(rng) < params.hflip_prob) out = hflip(out);
  if (coin(rng) < params.vflip_prob) out = vflip(out);
  if (coin(rng) < params.rotate_prob) {
    out = rotate90(out, std::uniform_int_distribution<int>(1, 3)(rng));
  }
  if (pkg == AugmentPackage::Ver2) return out;

  out = box_jitter(out, params.jitter_fraction, rng());
  if (coin(rng) < params.photometric_prob) {
    const double brightness =
        std::uniform_real_distribution<double>(-params.brightness_range, params.brightness_range)(rng);
    const double contrast =
        std::uniform_real_distribution<double>(params.contrast_min, params.contrast_max)(rng);
    const double sigma = std::uniform_real_distribution<double>(0.0, params.noise_sigma_max)(rng);
    out = photometric(out, brightness, contrast, sigma, rng());
  }
  return out;
}

}  // namespace moonnet
