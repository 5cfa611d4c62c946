#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "hcp/errors.hpp"
#include "hcp/tensor.hpp"

namespace hcp {

using json = nlohmann::json;

// Directory archive of named arrays: one raw little-endian float32 .bin file
// per entry plus a manifest.json carrying keys, shapes and free-form
// metadata. Used for attention traces, prior-feature stacks and metric
// feature sets. Entries stream to disk as they are added.
class ArrayArchiveWriter {
public:
    explicit ArrayArchiveWriter(const std::string& dir) : dir_(dir) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw ValidationError("array archive: cannot create directory " + dir + ": " + ec.message());
        manifest_["format"] = "hcp-array-archive";
        manifest_["version"] = 1;
        manifest_["metadata"] = json::object();
        manifest_["entries"] = json::array();
    }

    void set_metadata(const json& metadata) { manifest_["metadata"] = metadata; }

    void add(const std::string& key, const Tensor& tensor) {
        if (keys_.count(key)) throw ValidationError("array archive: duplicate key " + key);
        std::string file = file_name(key);
        std::ofstream out(dir_ / file, std::ios::binary);
        if (!out) throw ValidationError("array archive: cannot open " + (dir_ / file).string());
        std::vector<float> buf(static_cast<size_t>(tensor.numel()));
        for (int64_t i = 0; i < tensor.numel(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(tensor[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (!out) throw ValidationError("array archive: short write to " + file);
        out.close();
        json entry;
        entry["key"] = key;
        entry["shape"] = tensor.shape();
        entry["dtype"] = "f32";
        entry["file"] = file;
        manifest_["entries"].push_back(entry);
        keys_.insert({key, file});
        ++index_;
    }

    // Writes the manifest; the archive is incomplete until this runs.
    void finalize() {
        std::ofstream out(dir_ / "manifest.json");
        if (!out) throw ValidationError("array archive: cannot write manifest in " + dir_.string());
        out << manifest_.dump(2) << "\n";
    }

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::string file_name(const std::string& key) {
        std::string sanitized;
        for (char c : key)
            sanitized += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
                             ? c : '_';
        char prefix[16];
        std::snprintf(prefix, sizeof(prefix), "a%05d_", index_);
        return std::string(prefix) + sanitized + ".bin";
    }

    std::filesystem::path dir_;
    json manifest_;
    std::map<std::string, std::string> keys_;
    int index_ = 0;
};

class ArrayArchive {
public:
    static ArrayArchive load(const std::string& dir) {
        ArrayArchive a;
        a.dir_ = dir;
        std::ifstream in(a.dir_ / "manifest.json");
        if (!in) throw ValidationError("array archive: no manifest.json in " + dir);
        json manifest = json::parse(in, nullptr, /*allow_exceptions=*/false);
        if (manifest.is_discarded() || manifest.value("format", "") != "hcp-array-archive")
            throw ValidationError("array archive: " + dir + " is not a valid archive");
        a.metadata_ = manifest.value("metadata", json::object());
        for (const auto& entry : manifest["entries"]) {
            Entry e;
            e.key = entry.at("key").get<std::string>();
            e.shape = entry.at("shape").get<Shape>();
            e.file = entry.at("file").get<std::string>();
            a.order_.push_back(e.key);
            a.entries_[e.key] = e;
        }
        return a;
    }

    const json& metadata() const { return metadata_; }
    const std::vector<std::string>& keys() const { return order_; }
    bool contains(const std::string& key) const { return entries_.count(key) > 0; }

    Shape shape(const std::string& key) const { return find(key).shape; }

    Tensor get(const std::string& key) const {
        const Entry& e = find(key);
        std::ifstream in(dir_ / e.file, std::ios::binary);
        if (!in) throw ValidationError("array archive: missing data file " + e.file);
        size_t n = static_cast<size_t>(shape_numel(e.shape));
        std::vector<float> buf(n);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
        if (static_cast<size_t>(in.gcount()) != n * sizeof(float))
            throw ValidationError("array archive: truncated data file " + e.file);
        Tensor t(e.shape);
        for (size_t i = 0; i < n; ++i) t[static_cast<int64_t>(i)] = static_cast<double>(buf[i]);
        return t;
    }

private:
    struct Entry {
        std::string key;
        Shape shape;
        std::string file;
    };

    const Entry& find(const std::string& key) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) throw ValidationError("array archive: no entry " + key);
        return it->second;
    }

    std::filesystem::path dir_;
    json metadata_;
    std::vector<std::string> order_;
    std::map<std::string, Entry> entries_;
};

}  // namespace hcp
