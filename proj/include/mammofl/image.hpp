#pragma once

#include <cstdint>
#include <vector>

#include "mammofl/errors.hpp"

namespace mammofl {

/// Single-channel floating-point raster. original_* keeps the pre-resize
/// extents so predicted masks can be resampled back; it is set once at
/// ingestion and carried through every later operation.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;  // row-major
    int original_width = 0;
    int original_height = 0;

    Image() = default;
    Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0.0f),
                          original_width(w), original_height(h) {
        if (w <= 0 || h <= 0) throw ConfigError("image extents must be positive");
    }

    float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return pixels.size(); }
};

/// Per-pixel boolean raster.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;  // 0 or 1, row-major

    BinaryMask() = default;
    BinaryMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {
        if (w <= 0 || h <= 0) throw ConfigError("mask extents must be positive");
    }

    std::uint8_t& at(int y, int x) { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x]; }

    std::int64_t area() const {
        std::int64_t n = 0;
        for (std::uint8_t b : bits) n += b;
        return n;
    }

    bool operator==(const BinaryMask&) const = default;
};

}  // namespace mammofl
