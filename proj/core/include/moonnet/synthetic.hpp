#pragma once

#include <cstdint>
#include <vector>

#include "moonnet/augment.hpp"

namespace moonnet {

inline constexpr int kCellSize = 32;

/// Largest patch side for an input of `size` pixels: the COCO small-object
/// cutoff (32 px at 640) scaled to `size`, kept within [3, 7].
int max_patch_side(int size);

/// Textured noise with tiny bright square patches. The image is split into
/// (size/32)^2 cells and each cell independently holds one patch with
/// probability 0.5. Patch boxes are class 0.
struct SyntheticSample {
  LabeledImage image;
  Tensor4 presence;  // (1, 1, size/32, size/32), 1 where a cell holds a patch
};

/// Deterministic in (seed, index, size).
SyntheticSample make_synthetic_sample(int size, std::uint64_t seed, std::uint64_t index);

/// Presence grid from box centres; used after geometric augmentation.
Tensor4 presence_from_boxes(const std::vector<BBox>& boxes, int size);

struct Batch {
  Tensor4 images;   // (N, 3, S, S)
  Tensor4 targets;  // (N, 1, S/32, S/32)
};

Batch stack_batch(const std::vector<SyntheticSample>& samples);

}  // namespace moonnet
