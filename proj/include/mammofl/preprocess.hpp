#pragma once

#include "mammofl/image.hpp"

namespace mammofl::prep {

/// Metal tag removal on a raw (pre-normalization) image: pixels above
/// threshold*max are grouped into 8-connected components; every component
/// except the largest is filled with the image minimum. An image with no
/// suprathreshold pixels (or a single bright component) is returned
/// unchanged.
Image remove_metal_tag(const Image& img, double intensity_threshold = 0.85);

/// Edge-aligned bilinear resampling (half-pixel centers, clamped borders).
/// original_* of the input is preserved unchanged.
Image resize(const Image& img, int target_width, int target_height);

/// (p - min) / (max - min); a constant image maps to all zeros.
Image minmax_normalize(const Image& img);

/// Zeroes pixels outside the mask and min-max renormalizes over the masked
/// region only. An empty mask yields an all-zero image (callers flag it).
Image apply_breast_mask(const Image& img, const BinaryMask& mask);

/// Nearest-neighbor mask resampling (same edge-aligned mapping as resize;
/// masks stay strictly binary).
BinaryMask resample_mask(const BinaryMask& mask, int target_width, int target_height);

}  // namespace mammofl::prep
