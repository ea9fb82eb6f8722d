#include "zsar/embedding.hpp"

#include "zsar/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace zsar {

static_assert(std::endian::native == std::endian::little,
              "embedding table I/O assumes a little-endian host");

namespace {

constexpr std::string_view kMagic = "ZSEMBTBL";

template <class T>
void put_le(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

class ByteReader {
public:
    ByteReader(std::string_view bytes, std::string_view origin) : bytes_(bytes), origin_(origin) {}

    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string_view take(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw FormatError(std::string(origin_) + ": truncated file");
    }

    std::string_view bytes_;
    std::string_view origin_;
    std::size_t pos_ = 0;
};

}  // namespace

double EmbeddingVector::norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
}

bool EmbeddingVector::finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void EmbeddingMatrix::append_row(std::span<const float> values) {
    if (dim_ == 0) dim_ = values.size();
    if (values.size() != dim_ || dim_ == 0) {
        throw ShapeError("embedding row has dim " + std::to_string(values.size()) + ", expected " +
                         std::to_string(dim_));
    }
    data_.insert(data_.end(), values.begin(), values.end());
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    return fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

void EmbeddingTable::put(std::string key, std::span<const float> values) {
    if (dim_ == 0) dim_ = values.size();
    if (values.size() != dim_ || dim_ == 0) {
        throw ShapeError("table row '" + key + "' has dim " + std::to_string(values.size()) +
                         ", table dim is " + std::to_string(dim_));
    }
    if (!std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); })) {
        throw DomainError("table row '" + key + "' contains non-finite values");
    }
    rows_.insert_or_assign(std::move(key), std::vector<float>(values.begin(), values.end()));
}

std::optional<std::span<const float>> EmbeddingTable::find(std::string_view key) const {
    auto it = rows_.find(std::string(key));
    if (it == rows_.end()) return std::nullopt;
    return std::span<const float>(it->second);
}

std::vector<std::string> EmbeddingTable::keys() const {
    std::vector<std::string> out;
    out.reserve(rows_.size());
    for (const auto& [k, _] : rows_) out.push_back(k);
    std::sort(out.begin(), out.end());
    return out;
}

std::string EmbeddingTable::serialize() const {
    std::string out;
    out.reserve(24 + rows_.size() * (16 + dim_ * 4));
    out.append(kMagic);
    put_le<std::uint32_t>(out, kVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
    put_le<std::uint64_t>(out, rows_.size());
    for (const auto& key : keys()) {
        const auto& row = rows_.at(key);
        put_le<std::uint64_t>(out, fnv1a64(key));
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(key.size()));
        out.append(key);
        out.append(reinterpret_cast<const char*>(row.data()), row.size() * sizeof(float));
    }
    return out;
}

EmbeddingTable EmbeddingTable::deserialize(std::string_view bytes, std::string_view origin) {
    ByteReader r(bytes, origin);
    if (r.take(kMagic.size()) != kMagic) throw FormatError(std::string(origin) + ": bad magic");
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) {
        throw FormatError(std::string(origin) + ": unsupported version " + std::to_string(version));
    }
    const auto dim = r.get<std::uint32_t>();
    const auto count = r.get<std::uint64_t>();
    if (dim == 0) throw FormatError(std::string(origin) + ": zero dimension");

    EmbeddingTable table(dim);
    table.rows_.reserve(count);
    std::vector<float> row(dim);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto hash = r.get<std::uint64_t>();
        const auto len = r.get<std::uint32_t>();
        std::string key(r.take(len));
        if (fnv1a64(key) != hash) {
            throw FormatError(std::string(origin) + ": key hash mismatch for record " + std::to_string(i));
        }
        auto raw = r.take(std::size_t{dim} * sizeof(float));
        std::memcpy(row.data(), raw.data(), raw.size());
        table.put(std::move(key), row);
    }
    if (!r.at_end()) throw FormatError(std::string(origin) + ": trailing bytes after last record");
    return table;
}

EmbeddingTable EmbeddingTable::read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open embedding table " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str(), path.string());
}

void EmbeddingTable::write(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write embedding table " + tmp.string());
        const std::string bytes = serialize();
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write on " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace zsar
