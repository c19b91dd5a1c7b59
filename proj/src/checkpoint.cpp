// SPDX-License-Identifier: Apache-2.0

#include "ether/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "ether/errors.hpp"

namespace ether {

namespace {

constexpr unsigned char kMagic[4] = {'E', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr unsigned char kDtypeF64 = 0;

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xFF));
    out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
    }
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
    }
}

void put_f64(std::vector<unsigned char>& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct Reader {
    const std::vector<unsigned char>& bytes;
    std::size_t pos = 0;

    void need(std::size_t count, const std::string& what) const {
        if (pos + count > bytes.size()) {
            throw FormatError("checkpoint: truncated while reading " + what, pos);
        }
    }

    std::uint16_t u16(const std::string& what) {
        need(2, what);
        const std::uint16_t v = static_cast<std::uint16_t>(bytes[pos]) |
                                static_cast<std::uint16_t>(bytes[pos + 1]) << 8;
        pos += 2;
        return v;
    }

    std::uint32_t u32(const std::string& what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        }
        pos += 4;
        return v;
    }

    std::uint64_t u64(const std::string& what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        }
        pos += 8;
        return v;
    }

    double f64(const std::string& what) {
        return std::bit_cast<double>(u64(what));
    }
};

} // namespace

std::vector<unsigned char> encode_checkpoint(const std::map<std::string, Tensor>& tensors) {
    std::vector<unsigned char> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
        if (name.size() > 0xFFFF) {
            throw ContractError("checkpoint: tensor name too long: " + name);
        }
        put_u16(out, static_cast<std::uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        out.push_back(kDtypeF64);
        out.push_back(static_cast<unsigned char>(tensor.rank()));
        for (const std::size_t dim : tensor.shape()) {
            put_u64(out, dim);
        }
        for (const double v : tensor.data()) {
            put_f64(out, v);
        }
    }
    return out;
}

std::map<std::string, Tensor> decode_checkpoint(const std::vector<unsigned char>& bytes) {
    Reader in{bytes};
    in.need(4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("checkpoint: bad magic", 0);
    }
    in.pos = 4;
    const std::uint32_t version = in.u32("version");
    if (version != kVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version), 4);
    }
    const std::uint32_t count = in.u32("tensor count");

    std::map<std::string, Tensor> out;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint16_t name_len = in.u16("name length");
        in.need(name_len, "tensor name");
        std::string name(bytes.begin() + static_cast<std::ptrdiff_t>(in.pos),
                         bytes.begin() + static_cast<std::ptrdiff_t>(in.pos + name_len));
        in.pos += name_len;

        in.need(2, "dtype/rank of tensor '" + name + "'");
        const unsigned char dtype = bytes[in.pos++];
        const unsigned char rank = bytes[in.pos++];
        if (dtype != kDtypeF64) {
            throw FormatError("checkpoint: unknown dtype " + std::to_string(dtype) +
                              " for tensor '" + name + "'", in.pos - 2);
        }
        Shape shape(rank);
        std::size_t numel = 1;
        for (unsigned r = 0; r < rank; ++r) {
            shape[r] = static_cast<std::size_t>(in.u64("dims of tensor '" + name + "'"));
            numel *= shape[r];
        }
        std::vector<double> data(numel);
        for (std::size_t i = 0; i < numel; ++i) {
            data[i] = in.f64("payload of tensor '" + name + "'");
        }
        if (out.count(name)) {
            throw FormatError("checkpoint: duplicate tensor '" + name + "'", in.pos);
        }
        out.emplace(name, Tensor::from_data(std::move(shape), std::move(data)));
    }
    if (in.pos != bytes.size()) {
        throw FormatError("checkpoint: trailing bytes after last tensor", in.pos);
    }
    return out;
}

void save_checkpoint(const std::string& path,
                     const std::map<std::string, Tensor>& tensors) {
    const std::vector<unsigned char> bytes = encode_checkpoint(tensors);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("checkpoint: cannot open '" + tmp + "' for writing");
        }
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw IoError("checkpoint: write failed for '" + tmp + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("checkpoint: cannot move '" + tmp + "' to '" + path + "': " +
                      ec.message());
    }
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("checkpoint: cannot open '" + path + "'");
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

} // namespace ether
