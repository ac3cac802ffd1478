#pragma once

#include <cstring>
#include <fstream>

#include "tape.hpp"

namespace commlearn {

// Checkpoint file: 4-byte magic "CLCP", one version byte, u32 record
// count, then per record: u32 name length, name bytes, u32 rank,
// u32 dims[rank], float64 little-endian data.
namespace ckpt {

constexpr char kMagic[4] = {'C', 'L', 'C', 'P'};
constexpr uint8_t kVersion = 1;

inline void put_u32(std::ostream& os, uint32_t v) {
    char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
    os.write(b, 4);
}

inline uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

inline void put_f64(std::ostream& os, double v) {
    uint64_t u;
    std::memcpy(&u, &v, 8);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = char((u >> (8 * i)) & 0xff);
    os.write(b, 8);
}

inline double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= uint64_t(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

} // namespace ckpt

inline void save_checkpoint(const std::string& path, const std::vector<const Parameter*>& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write(ckpt::kMagic, 4);
    os.put(char(ckpt::kVersion));
    ckpt::put_u32(os, uint32_t(params.size()));
    for (const auto* p : params) {
        ckpt::put_u32(os, uint32_t(p->name.size()));
        os.write(p->name.data(), std::streamsize(p->name.size()));
        ckpt::put_u32(os, uint32_t(p->value.shape.size()));
        for (int d : p->value.shape) ckpt::put_u32(os, uint32_t(d));
        for (double v : p->value.data) ckpt::put_f64(os, v);
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, ckpt::kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const int version = is.get();
    if (version != ckpt::kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    const uint32_t count = ckpt::get_u32(is);
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = ckpt::get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const uint32_t rank = ckpt::get_u32(is);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = int(ckpt::get_u32(is));
        Tensor t(shape);
        for (auto& v : t.data) v = ckpt::get_f64(is);
        if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
        out.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

} // namespace commlearn
