#include <gtest/gtest.h>

#include <algorithm>

#include "moonnet/augment.hpp"
#include "moonnet/errors.hpp"
#include "moonnet/rng.hpp"

using namespace moonnet;

namespace {

BBox rect(double x1, double y1, double x2, double y2) {
  BBox b;
  b.x1 = x1;
  b.y1 = y1;
  b.x2 = x2;
  b.y2 = y2;
  return b;
}

// Random image with boxes on a quarter-pixel grid, so geometric maps are exact.
LabeledImage random_labeled(int h, int w, std::uint64_t seed, int boxes = 4) {
  Rng rng(seed);
  LabeledImage li{random_tensor<float>(Shape{1, 3, h, w}, rng, 0.0, 1.0), {}};
  std::uniform_int_distribution<int> qx(0, 4 * w - 8), qy(0, 4 * h - 8), ext(1, 8);
  for (int i = 0; i < boxes; ++i) {
    BBox b;
    b.x1 = qx(rng) / 4.0;
    b.y1 = qy(rng) / 4.0;
    b.x2 = b.x1 + ext(rng) / 4.0;
    b.y2 = b.y1 + ext(rng) / 4.0;
    b.class_id = i % 3;
    li.boxes.push_back(b);
  }
  return li;
}

// Bounding box of the pixels set in channel 0 of a {0, 1} mask image.
BBox mask_extent(const Tensor4& img) {
  BBox b = rect(1e9, 1e9, -1e9, -1e9);
  for (int y = 0; y < img.shape().h; ++y)
    for (int x = 0; x < img.shape().w; ++x)
      if (img(0, 0, y, x) > 0.5f) {
        b.x1 = std::min<double>(b.x1, x);
        b.y1 = std::min<double>(b.y1, y);
        b.x2 = std::max<double>(b.x2, x + 1);
        b.y2 = std::max<double>(b.y2, y + 1);
      }
  return b;
}

}  // namespace

TEST(Geometric, FlipFixtures) {
  LabeledImage li{Tensor4(Shape{1, 3, 2, 8}), {}};
  li.image(0, 1, 0, 0) = 1.0f;
  li.boxes.push_back(rect(1, 0, 3, 2));
  const auto h = hflip(li);
  EXPECT_EQ(h.image(0, 1, 0, 7), 1.0f);
  EXPECT_EQ(h.boxes[0], rect(5, 0, 7, 2));
  const auto v = vflip(li);
  EXPECT_EQ(v.image(0, 1, 1, 0), 1.0f);
  EXPECT_EQ(v.boxes[0], rect(1, 0, 3, 2));
}

TEST(Geometric, Involutions) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto li = random_labeled(6 + seed % 3, 9 + seed % 4, seed);
    EXPECT_EQ(hflip(hflip(li)), li);
    EXPECT_EQ(vflip(vflip(li)), li);
    EXPECT_EQ(rotate90(li, 0), li);
    EXPECT_EQ(rotate90(rotate90(li, 1), 3), li);
    EXPECT_EQ(rotate90(rotate90(li, 2), 2), li);
    EXPECT_EQ(rotate90(rotate90(rotate90(rotate90(li, 1), 1), 1), 1), li);
    EXPECT_EQ(rotate90(li, 2), hflip(vflip(li)));
  }
}

TEST(Geometric, BoxesFollowPixels) {
  // Paint each box as a mask; the transformed mask's extent is the transformed box.
  const int H = 10, W = 13;
  for (const BBox& b : {rect(2, 3, 5, 4), rect(0, 0, 1, 10), rect(7, 1, 13, 6)}) {
    LabeledImage li{Tensor4(Shape{1, 3, H, W}), {b}};
    for (int y = static_cast<int>(b.y1); y < b.y2; ++y)
      for (int x = static_cast<int>(b.x1); x < b.x2; ++x) li.image(0, 0, y, x) = 1.0f;
    for (int q = 0; q < 4; ++q) {
      const auto r = rotate90(li, q);
      EXPECT_EQ(mask_extent(r.image), r.boxes[0]) << "q=" << q;
    }
    EXPECT_EQ(mask_extent(hflip(li).image), hflip(li).boxes[0]);
    EXPECT_EQ(mask_extent(vflip(li).image), vflip(li).boxes[0]);
  }
}

TEST(Geometric, RotateSwapsDimensions) {
  const auto li = random_labeled(4, 7, 1);
  EXPECT_EQ(rotate90(li, 1).image.shape(), (Shape{1, 3, 7, 4}));
  EXPECT_THROW(rotate90(li, 4), ConfigError);
  EXPECT_THROW(rotate90(li, -1), ConfigError);
}

TEST(Photometric, IdentityAndClamp) {
  const auto li = random_labeled(5, 5, 2);
  EXPECT_EQ(photometric(li, 0.0, 1.0, 0.0, 0), li);
  const auto bright = photometric(li, 5.0, 1.0, 0.0, 0);
  for (float v : bright.image.values()) EXPECT_EQ(v, 1.0f);
  const auto noisy = photometric(li, 0.0, 3.0, 0.5, 1);
  for (float v : noisy.image.values()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_EQ(noisy.boxes, li.boxes);
  EXPECT_THROW(photometric(li, 0.0, 0.0, 0.0, 0), ConfigError);
}

TEST(BoxJitter, ZeroIsIdentityAndBoxesStayInside) {
  const auto li = random_labeled(16, 16, 3, 8);
  EXPECT_EQ(box_jitter(li, 0.0, 4), li);
  const auto j = box_jitter(li, 0.4, 5);
  EXPECT_EQ(j.image, li.image);
  for (const auto& b : j.boxes) {
    EXPECT_TRUE(b.valid());
    EXPECT_GE(b.x1, 0.0);
    EXPECT_LE(b.x2, 16.0);
    EXPECT_GE(b.y1, 0.0);
    EXPECT_LE(b.y2, 16.0);
  }
}

TEST(Packages, Ver1IsIdentity) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto li = random_labeled(8, 8, seed);
    EXPECT_EQ(apply_package(AugmentPackage::Ver1, li, seed), li);
  }
}

TEST(Packages, FixedSeedIsReproducible) {
  const auto li = random_labeled(12, 12, 7);
  for (auto pkg : {AugmentPackage::Ver2, AugmentPackage::Ver3}) {
    const auto a = apply_package(pkg, li, 99);
    const auto b = apply_package(pkg, li, 99);
    EXPECT_EQ(a, b);
  }
  bool any_differs = false;
  for (std::uint64_t s = 0; s < 8; ++s) {
    any_differs = any_differs ||
                  !(apply_package(AugmentPackage::Ver3, li, s) == apply_package(AugmentPackage::Ver3, li, s + 100));
  }
  EXPECT_TRUE(any_differs);
}

TEST(Packages, Ver2PreservesPixelValues) {
  const auto li = random_labeled(8, 8, 8);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto out = apply_package(AugmentPackage::Ver2, li, s);
    std::vector<float> a(li.image.values().begin(), li.image.values().end());
    std::vector<float> b(out.image.values().begin(), out.image.values().end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
    ASSERT_EQ(out.boxes.size(), li.boxes.size());
    for (std::size_t i = 0; i < li.boxes.size(); ++i) EXPECT_EQ(out.boxes[i].area(), li.boxes[i].area());
  }
}

TEST(Packages, Names) {
  EXPECT_EQ(parse_augment_package("ver3"), AugmentPackage::Ver3);
  EXPECT_EQ(parse_augment_package(to_string(AugmentPackage::Ver2)), AugmentPackage::Ver2);
  EXPECT_THROW(parse_augment_package("ver4"), ConfigError);
}
