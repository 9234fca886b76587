#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mammofl/image.hpp"

namespace mammofl {

/// Binary PGM ("P5") I/O. maxval must be 255 (one byte per pixel) or 65535
/// (two bytes, big-endian per the PGM convention). Pixel values map to
/// [0,1] as gray/maxval; writing clamps to [0,1] and quantizes by rounding.
std::vector<std::uint8_t> write_pgm(const Image& img, int maxval = 65535);
Image read_pgm(std::span<const std::uint8_t> bytes);

void write_pgm_file(const std::string& path, const Image& img, int maxval = 65535);
Image read_pgm_file(const std::string& path);

/// Masks travel as 8-bit PGM with 0/255 values; >= 128 reads back as 1.
std::vector<std::uint8_t> write_mask_pgm(const BinaryMask& mask);
BinaryMask read_mask_pgm(std::span<const std::uint8_t> bytes);
void write_mask_pgm_file(const std::string& path, const BinaryMask& mask);
BinaryMask read_mask_pgm_file(const std::string& path);

}  // namespace mammofl
