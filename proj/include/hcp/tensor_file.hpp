#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "hcp/errors.hpp"
#include "hcp/tensor.hpp"

namespace hcp {

// Single-file container of named float64 arrays plus a JSON metadata block.
// Layout: 8-byte magic, u64 header length, JSON header, raw data.
// The header maps each name to {shape, offset, nbytes}; offsets are relative
// to the start of the data section. Names are written sorted so the same
// content always produces the same bytes.

inline constexpr char kTensorFileMagic[8] = {'H', 'C', 'P', 'T', '0', '0', '0', '1'};

inline void save_tensor_file(const std::string& path,
                             const std::map<std::string, Tensor>& tensors,
                             const json& metadata) {
    json header;
    header["metadata"] = metadata;
    json index = json::object();
    uint64_t offset = 0;
    for (const auto& [name, tensor] : tensors) {
        json e;
        e["shape"] = tensor.shape();
        e["dtype"] = "f64";
        e["offset"] = offset;
        uint64_t nbytes = static_cast<uint64_t>(tensor.numel()) * sizeof(double);
        e["nbytes"] = nbytes;
        index[name] = e;
        offset += nbytes;
    }
    header["tensors"] = index;
    std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("tensor file: cannot open " + path + " for writing");
    out.write(kTensorFileMagic, sizeof(kTensorFileMagic));
    uint64_t header_len = header_text.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& [name, tensor] : tensors) {
        (void)name;
        out.write(reinterpret_cast<const char*>(tensor.data()),
                  static_cast<std::streamsize>(tensor.numel() * sizeof(double)));
    }
    if (!out) throw ValidationError("tensor file: short write to " + path);
}

struct TensorFile {
    std::map<std::string, Tensor> tensors;
    json metadata;
};

inline TensorFile load_tensor_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("tensor file: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (in.gcount() != sizeof(magic) || std::memcmp(magic, kTensorFileMagic, sizeof(magic)) != 0)
        throw ValidationError("tensor file: " + path + " has wrong magic");
    uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (static_cast<uint64_t>(in.gcount()) != header_len)
        throw ValidationError("tensor file: truncated header in " + path);
    json header = json::parse(header_text, nullptr, /*allow_exceptions=*/false);
    if (header.is_discarded()) throw ValidationError("tensor file: bad header JSON in " + path);

    TensorFile result;
    result.metadata = header.value("metadata", json::object());
    std::streampos data_start = in.tellg();
    for (const auto& [name, entry] : header.at("tensors").items()) {
        Shape shape = entry.at("shape").get<Shape>();
        uint64_t offset = entry.at("offset").get<uint64_t>();
        Tensor t(shape);
        in.seekg(data_start + static_cast<std::streamoff>(offset));
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (static_cast<uint64_t>(in.gcount()) != static_cast<uint64_t>(t.numel()) * sizeof(double))
            throw ValidationError("tensor file: truncated data for " + name + " in " + path);
        result.tensors.emplace(name, std::move(t));
    }
    return result;
}

}  // namespace hcp
