#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pri4r/nn.hpp"

namespace pri4r {

// "P4RK" container: magic, u32 version, then per parameter
//   u32 name length, name bytes, u32 rank, u32 dims..., f64 little-endian data
// until end of file.

constexpr uint32_t kCheckpointVersion = 1;

namespace io {

inline void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_f64(std::ostream& os, const double* p, size_t n) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 8));
}
inline uint32_t read_u32(std::istream& is, const char* what) {
    uint32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw std::runtime_error(std::string("checkpoint: truncated reading ") + what);
    return v;
}
inline void read_f64(std::istream& is, double* p, size_t n, const char* what) {
    is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * 8));
    if (!is) throw std::runtime_error(std::string("checkpoint: truncated reading ") + what);
}

}  // namespace io

inline void save_checkpoint(const ParamStore& ps, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write("P4RK", 4);
    io::write_u32(os, kCheckpointVersion);
    for (const auto& name : ps.names()) {
        const Tensor& t = ps.at(name);
        io::write_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        io::write_u32(os, static_cast<uint32_t>(t.shape().size()));
        for (size_t d : t.shape()) io::write_u32(os, static_cast<uint32_t>(d));
        io::write_f64(os, t.data().data(), t.size());
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<double> data;
};

inline std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "P4RK", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    uint32_t version = io::read_u32(is, "version");
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    std::vector<CheckpointEntry> entries;
    while (true) {
        uint32_t name_len;
        is.read(reinterpret_cast<char*>(&name_len), 4);
        if (is.eof()) break;
        if (!is) throw std::runtime_error("checkpoint: truncated name length");
        CheckpointEntry e;
        e.name.resize(name_len);
        is.read(e.name.data(), name_len);
        if (!is) throw std::runtime_error("checkpoint: truncated name");
        uint32_t rank = io::read_u32(is, "rank");
        size_t n = 1;
        for (uint32_t i = 0; i < rank; ++i) {
            uint32_t d = io::read_u32(is, "dims");
            e.shape.push_back(d);
            n *= d;
        }
        e.data.resize(n);
        io::read_f64(is, e.data.data(), n, e.name.c_str());
        entries.push_back(std::move(e));
    }
    return entries;
}

// Loads values into an already-constructed store; every checkpoint entry must
// match an existing parameter.
inline void restore_params(ParamStore& ps, const std::vector<CheckpointEntry>& entries) {
    for (const auto& e : entries) {
        if (!ps.has(e.name)) throw std::runtime_error("checkpoint: unexpected parameter " + e.name);
        if (ps.at(e.name).shape() != e.shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + e.name);
        ps.load_values(e.name, e.data);
    }
}

}  // namespace pri4r
