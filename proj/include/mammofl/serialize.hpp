#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mammofl/weights.hpp"

namespace mammofl::nn {

/// CRC-32 (IEEE 802.3 polynomial, reflected), as used by zip/png.
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// MFLW weight file format, also the federation wire payload.
///
///   magic "MFLW" | version u16 LE | tensor count u32 LE
///   per tensor (lexicographic name order):
///     name length u16 LE | UTF-8 name | dtype u8 (0x00 = float32 LE)
///     rank u8 | dims u32 LE each | raw row-major payload
///   crc32 u32 LE over all preceding bytes
///
/// Round-trips are bit-exact; any single corrupted byte fails the CRC or the
/// structural checks on load.
std::vector<std::uint8_t> encode_weights(const ModelWeights& weights);
ModelWeights decode_weights(std::span<const std::uint8_t> bytes);

void write_weights_file(const std::string& path, const ModelWeights& weights);
ModelWeights read_weights_file(const std::string& path);

}  // namespace mammofl::nn
