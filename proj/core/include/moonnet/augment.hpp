#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "moonnet/tensor.hpp"

namespace moonnet {

/// Axis-aligned box in pixel coordinates, (x1, y1) top-left, (x2, y2)
/// bottom-right, continuous coordinates in [0, W] x [0, H].
struct BBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  int class_id = 0;
  std::optional<double> score;
  bool difficult = false;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const { return x1 < x2 && y1 < y2; }
  bool operator==(const BBox&) const = default;
};

/// One RGB image, shape (1, 3, H, W), pixel values in [0, 1].
struct LabeledImage {
  Tensor4 image;
  std::vector<BBox> boxes;

  int width() const { return image.shape().w; }
  int height() const { return image.shape().h; }
  bool operator==(const LabeledImage&) const = default;
};

LabeledImage hflip(const LabeledImage& li);
LabeledImage vflip(const LabeledImage& li);
/// Counter-clockwise rotation by quarter_turns * 90 degrees (lossless).
LabeledImage rotate90(const LabeledImage& li, int quarter_turns);
/// p -> clamp(contrast (p - 0.5) + 0.5 + brightness + N(0, noise_sigma), 0, 1).
LabeledImage photometric(const LabeledImage& li, double brightness, double contrast,
                         double noise_sigma, std::uint64_t seed);
/// Moves each box edge by up to max_fraction of the box extent, clips to the
/// image, and drops boxes that become degenerate.
LabeledImage box_jitter(const LabeledImage& li, double max_fraction, std::uint64_t seed);

enum class AugmentPackage {
  Ver1,  // no augmentation
  Ver2,  // geometric only
  Ver3,  // geometric + box jitter + photometric
};

std::string_view to_string(AugmentPackage pkg);
AugmentPackage parse_augment_package(std::string_view text);

struct AugmentParams {
  double hflip_prob = 0.5;
  double vflip_prob = 0.5;
  double rotate_prob = 0.5;
  double jitter_fraction = 0.05;
  double photometric_prob = 0.8;
  double brightness_range = 0.1;  // uniform in [-r, r]
  double contrast_min = 0.8;
  double contrast_max = 1.2;
  double noise_sigma_max = 0.03;
};

LabeledImage apply_package(AugmentPackage pkg, const LabeledImage& li, std::uint64_t seed,
                           const AugmentParams& params = {});

}  // namespace moonnet
