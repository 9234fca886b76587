#include "mammofl/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "mammofl/errors.hpp"

namespace mammofl::nn {

namespace {

constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0x00;

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

/// Bounds-checked little-endian reader.
struct Reader {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw DataError("weight blob truncated");
    }
    std::uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
        pos += n;
        return s;
    }
};

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    static const auto table = make_crc_table();
    std::uint32_t c = 0xffffffffu;
    for (std::uint8_t b : bytes) c = table[(c ^ b) & 0xff] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

std::vector<std::uint8_t> encode_weights(const ModelWeights& weights) {
    std::vector<std::uint8_t> out;
    out.push_back('M');
    out.push_back('F');
    out.push_back('L');
    out.push_back('W');
    put_u16(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(weights.entries.size()));
    for (const auto& [name, t] : weights.entries) {
        if (name.size() > 0xffff) throw ConfigError("tensor name too long: " + name);
        put_u16(out, static_cast<std::uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        out.push_back(kDtypeF32);
        if (t.dims.size() > 0xff) throw ConfigError("tensor rank too large: " + name);
        out.push_back(static_cast<std::uint8_t>(t.dims.size()));
        for (int d : t.dims) put_u32(out, static_cast<std::uint32_t>(d));
        for (float v : t.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    put_u32(out, crc32(std::span(out.data(), out.size())));
    return out;
}

ModelWeights decode_weights(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 + 2 + 4 + 4) throw DataError("weight blob too short");
    const std::size_t body = bytes.size() - 4;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
    if (crc32(bytes.first(body)) != stored) throw DataError("weight blob CRC mismatch");

    Reader r{bytes.first(body)};
    if (r.str(4) != "MFLW") throw DataError("bad weight magic");
    if (r.u16() != kVersion) throw DataError("unsupported weight file version");
    const std::uint32_t n_tensors = r.u32();

    ModelWeights weights;
    std::string prev;
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        const std::uint16_t name_len = r.u16();
        std::string name = r.str(name_len);
        if (i > 0 && !(prev < name)) throw DataError("tensor names out of canonical order");
        prev = name;
        if (r.u8() != kDtypeF32) throw DataError("unsupported dtype for tensor " + name);
        const std::uint8_t rank = r.u8();
        std::vector<int> dims(rank);
        std::uint64_t n = 1;
        for (auto& d : dims) {
            std::uint32_t e = r.u32();
            if (e == 0 || e > 0x7fffffffu) throw DataError("bad extent in tensor " + name);
            d = static_cast<int>(e);
            n *= e;
            if (n > (1ull << 32)) throw DataError("tensor too large: " + name);
        }
        if (rank == 0) n = 0;
        r.need(4 * n);
        std::vector<float> data(n);
        for (auto& v : data) v = std::bit_cast<float>(r.u32());
        weights.entries.emplace(std::move(name), nn::Tensor(std::move(dims), std::move(data)));
    }
    if (r.pos != body) throw DataError("trailing bytes in weight blob");
    return weights;
}

void write_weights_file(const std::string& path, const ModelWeights& weights) {
    auto bytes = encode_weights(weights);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("short write to " + path);
}

ModelWeights read_weights_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_weights(std::span(bytes.data(), bytes.size()));
}

}  // namespace mammofl::nn
