#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "gensar/error.hpp"

namespace gensar {

// Parameter checkpoint, little-endian binary:
//   magic "GSNM", version u32, then per-tensor records
//   (name length u32, UTF-8 name, rank u32, dims u32 x rank, f32 payload).
struct CheckpointTensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;
};

class CheckpointWriter {
public:
    explicit CheckpointWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw MissingInputError("cannot open checkpoint for write: " + path);
        out_.write("GSNM", 4);
        write_u32(1);
    }

    void add(const std::string& name, const std::vector<std::uint32_t>& dims,
             const float* data) {
        write_u32(static_cast<std::uint32_t>(name.size()));
        out_.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(static_cast<std::uint32_t>(dims.size()));
        std::uint64_t n = 1;
        for (auto d : dims) {
            write_u32(d);
            n *= d;
        }
        out_.write(reinterpret_cast<const char*>(data),
                   static_cast<std::streamsize>(n * sizeof(float)));
    }

private:
    void write_u32(std::uint32_t v) {
        char buf[4];
        std::memcpy(buf, &v, 4);
        out_.write(buf, 4);
    }
    std::ofstream out_;
};

inline std::map<std::string, CheckpointTensor> read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingInputError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "GSNM", 4) != 0)
        throw ConfigError("bad checkpoint magic in " + path);
    auto read_u32 = [&in, &path]() {
        std::uint32_t v;
        in.read(reinterpret_cast<char*>(&v), 4);
        if (!in) throw ConfigError("truncated checkpoint: " + path);
        return v;
    };
    std::uint32_t version = read_u32();
    if (version != 1) throw ConfigError("unsupported checkpoint version");
    std::map<std::string, CheckpointTensor> tensors;
    while (in.peek() != std::ifstream::traits_type::eof()) {
        std::uint32_t name_len = read_u32();
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        std::uint32_t rank = read_u32();
        CheckpointTensor t;
        std::uint64_t n = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            t.dims.push_back(read_u32());
            n *= t.dims.back();
        }
        t.data.resize(n);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
        if (!in) throw ConfigError("truncated checkpoint payload: " + path);
        tensors.emplace(std::move(name), std::move(t));
    }
    return tensors;
}

}  // namespace gensar
