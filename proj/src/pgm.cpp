#include "mammofl/pgm.hpp"

#include <cctype>
#include <cmath>
#include <fstream>

namespace mammofl {

namespace {

struct HeaderReader {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    // skips whitespace and '#' comments between header tokens
    void skip_separators() {
        while (pos < bytes.size()) {
            if (std::isspace(bytes[pos])) {
                ++pos;
            } else if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
    }

    long token_int() {
        skip_separators();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw DataError("malformed PGM header");
        long v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 1000000000L) throw DataError("PGM header value out of range");
            ++pos;
        }
        return v;
    }
};

void append_int(std::vector<std::uint8_t>& out, long v) {
    const std::string s = std::to_string(v);
    out.insert(out.end(), s.begin(), s.end());
}

}  // namespace

std::vector<std::uint8_t> write_pgm(const Image& img, int maxval) {
    if (maxval != 255 && maxval != 65535) throw DataError("unsupported PGM maxval");
    std::vector<std::uint8_t> out;
    out.push_back('P');
    out.push_back('5');
    out.push_back('\n');
    append_int(out, img.width);
    out.push_back(' ');
    append_int(out, img.height);
    out.push_back('\n');
    append_int(out, maxval);
    out.push_back('\n');
    for (float v : img.pixels) {
        float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        const long gray = std::lround(static_cast<double>(c) * maxval);
        if (maxval == 255) {
            out.push_back(static_cast<std::uint8_t>(gray));
        } else {
            out.push_back(static_cast<std::uint8_t>(gray >> 8));  // big-endian
            out.push_back(static_cast<std::uint8_t>(gray & 0xff));
        }
    }
    return out;
}

Image read_pgm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P') throw DataError("not a PGM file");
    if (bytes[1] != '5') {
        std::string magic{static_cast<char>(bytes[0]), static_cast<char>(bytes[1])};
        throw DataError("unsupported PGM format \"" + magic + "\" (only binary P5 is supported)");
    }
    HeaderReader r{bytes, 2};
    const long w = r.token_int();
    const long h = r.token_int();
    const long maxval = r.token_int();
    if (w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16) throw DataError("bad PGM dimensions");
    if (maxval != 255 && maxval != 65535) throw DataError("unsupported PGM maxval " + std::to_string(maxval));
    // exactly one whitespace byte separates the header from the payload
    if (r.pos >= bytes.size() || !std::isspace(bytes[r.pos])) throw DataError("malformed PGM header");
    ++r.pos;

    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    const std::size_t bytes_per = maxval == 255 ? 1 : 2;
    if (bytes.size() - r.pos < n * bytes_per) throw DataError("truncated PGM payload");
    if (bytes.size() - r.pos > n * bytes_per) throw DataError("trailing bytes after PGM payload");

    Image img(static_cast<int>(w), static_cast<int>(h));
    const float scale = 1.0f / static_cast<float>(maxval);
    const std::uint8_t* p = bytes.data() + r.pos;
    for (std::size_t i = 0; i < n; ++i) {
        unsigned gray = maxval == 255 ? p[i] : (static_cast<unsigned>(p[2 * i]) << 8) | p[2 * i + 1];
        if (gray > static_cast<unsigned>(maxval)) throw DataError("PGM sample exceeds maxval");
        img.pixels[i] = static_cast<float>(gray) * scale;
    }
    return img;
}

void write_pgm_file(const std::string& path, const Image& img, int maxval) {
    auto bytes = write_pgm(img, maxval);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("short write to " + path);
}

Image read_pgm_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return read_pgm(std::span(bytes.data(), bytes.size()));
}

std::vector<std::uint8_t> write_mask_pgm(const BinaryMask& mask) {
    Image img(mask.width, mask.height);
    for (std::size_t i = 0; i < mask.bits.size(); ++i) img.pixels[i] = mask.bits[i] ? 1.0f : 0.0f;
    return write_pgm(img, 255);
}

BinaryMask read_mask_pgm(std::span<const std::uint8_t> bytes) {
    Image img = read_pgm(bytes);
    BinaryMask mask(img.width, img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) mask.bits[i] = img.pixels[i] >= 0.5f ? 1 : 0;
    return mask;
}

void write_mask_pgm_file(const std::string& path, const BinaryMask& mask) {
    auto bytes = write_mask_pgm(mask);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("short write to " + path);
}

BinaryMask read_mask_pgm_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return read_mask_pgm(std::span(bytes.data(), bytes.size()));
}

}  // namespace mammofl
