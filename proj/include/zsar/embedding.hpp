#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace zsar {

/// Aggregated embedding (video or class mean). Kept in double precision.
struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dim() const noexcept { return values.size(); }
    double norm() const;
    bool finite() const;
};

/// Row-major stack of raw encoder outputs, one row per input.
class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;
    explicit EmbeddingMatrix(std::size_t dim) : dim_(dim) {}
    EmbeddingMatrix(std::size_t rows, std::size_t dim) : dim_(dim), data_(rows * dim, 0.0f) {}

    std::size_t rows() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
    std::size_t dim() const noexcept { return dim_; }
    bool empty() const noexcept { return data_.empty(); }

    std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
    std::span<float> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

    /// Throws ShapeError when `values.size() != dim()`.
    void append_row(std::span<const float> values);

    const std::vector<float>& data() const noexcept { return data_; }

private:
    std::size_t dim_ = 0;
    std::vector<float> data_;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) noexcept;
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// Keyed float32 vectors of one fixed dimension.
///
/// On-disk layout, little-endian:
///   "ZSEMBTBL" | u32 version (1) | u32 dim | u64 count
///   count x ( u64 fnv1a64(key) | u32 key_len | key bytes | dim x f32 )
/// Records are written in ascending key order; the reader verifies every
/// key hash and rejects truncated files.
class EmbeddingTable {
public:
    static constexpr std::uint32_t kVersion = 1;

    EmbeddingTable() = default;
    explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return rows_.size(); }

    /// Inserts or replaces; all values must be finite.
    void put(std::string key, std::span<const float> values);
    std::optional<std::span<const float>> find(std::string_view key) const;
    bool contains(std::string_view key) const { return find(key).has_value(); }

    std::vector<std::string> keys() const;  ///< sorted

    static EmbeddingTable read(const std::filesystem::path& path);
    void write(const std::filesystem::path& path) const;

    std::string serialize() const;
    static EmbeddingTable deserialize(std::string_view bytes, std::string_view origin = "embedding table");

private:
    std::size_t dim_ = 0;
    std::unordered_map<std::string, std::vector<float>> rows_;
};

}  // namespace zsar
