#pragma once

#include "zsar/embedding.hpp"
#include "zsar/video.hpp"

#include <array>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace zsar {

enum class BackendKind { Onnx, File };

std::string_view to_string(BackendKind kind);
BackendKind parse_backend_kind(std::string_view name);

struct EncoderSpec {
    BackendKind backend = BackendKind::File;
    std::string model_tag = "ViT-B/16";  ///< ViT-B/32, ViT-B/16 or a custom tag
    std::size_t embed_dim = 512;  ///< 0 lets the file backend take it from the table

    // file backend
    std::filesystem::path embedding_table;

    // onnx backend
    std::filesystem::path text_model;       ///< inputs token_embeddings[1,L,W], eot_mask[1,L]
    std::filesystem::path image_model;      ///< input pixel_values[1,3,S,S]
    std::filesystem::path token_embedding;  ///< embedding table keyed by decimal token id
    std::filesystem::path bpe_merges;
    std::size_t context_length = 77;
    int image_size = 224;
    std::array<float, 3> pixel_mean{0.48145466f, 0.4578275f, 0.40821073f};
    std::array<float, 3> pixel_std{0.26862954f, 0.26130258f, 0.27577711f};

    /// Reads an exporter manifest (encoder.json); relative paths resolve
    /// against the manifest's directory.
    static EncoderSpec from_manifest(const std::filesystem::path& manifest);

    /// Throws ConfigError or EnvironmentError (missing files).
    void validate() const;
};

/// Frozen text/image encoder pair. Rows are raw encoder outputs. Instances
/// are immutable after construction and safe to share across threads.
class Encoder {
public:
    virtual ~Encoder() = default;

    virtual std::size_t embed_dim() const = 0;
    virtual std::string_view model_tag() const = 0;

    /// One row per text. Throws BackendError / TokenizationError.
    virtual EmbeddingMatrix encode_texts(std::span<const std::string> texts) const = 0;

    /// One row per frame. Frames must be image_size x image_size RGB
    /// (ShapeError otherwise).
    virtual EmbeddingMatrix encode_frames(std::span<const Frame> frames) const = 0;
};

/// Precomputed vectors: texts are looked up by their exact string, frames by
/// Frame::key(). Unknown keys raise BackendError.
class FileEncoder final : public Encoder {
public:
    FileEncoder(EmbeddingTable table, std::string model_tag, std::size_t expected_dim = 0);
    static std::shared_ptr<FileEncoder> load(const EncoderSpec& spec);

    std::size_t embed_dim() const override { return table_.dim(); }
    std::string_view model_tag() const override { return model_tag_; }
    EmbeddingMatrix encode_texts(std::span<const std::string> texts) const override;
    EmbeddingMatrix encode_frames(std::span<const Frame> frames) const override;

    const EmbeddingTable& table() const noexcept { return table_; }

private:
    EmbeddingTable table_;
    std::string model_tag_;
};

/// ONNX towers executed with OpenCV's DNN module. Tokenization and the
/// token-embedding lookup happen on the host; pixel normalization too.
class OnnxEncoder final : public Encoder {
public:
    /// Loads both towers and runs the self-check (one text and one frame
    /// must produce `spec.embed_dim` outputs).
    static std::shared_ptr<OnnxEncoder> load(const EncoderSpec& spec);

    ~OnnxEncoder() override;

    std::size_t embed_dim() const override;
    std::string_view model_tag() const override;
    EmbeddingMatrix encode_texts(std::span<const std::string> texts) const override;
    EmbeddingMatrix encode_frames(std::span<const Frame> frames) const override;

    /// Texts truncated to the context window so far (each also logged once).
    std::size_t truncated_texts() const;

    struct Impl;

private:
    explicit OnnxEncoder(std::unique_ptr<Impl> impl);
    std::unique_ptr<Impl> impl_;
};

std::shared_ptr<const Encoder> make_encoder(const EncoderSpec& spec);

/// Encodes `texts` and `frames` with `source` and stores them in a table
/// that a FileEncoder serves identically.
EmbeddingTable dump_embeddings(const Encoder& source, std::span<const std::string> texts,
                               std::span<const Frame> frames);

}  // namespace zsar
