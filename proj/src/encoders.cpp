#include "zsar/encoders.hpp"

#include "zsar/bpe_tokenizer.hpp"
#include "zsar/errors.hpp"

#include <json.hpp>
#include <opencv2/dnn.hpp>

#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>

namespace zsar {

std::string_view to_string(BackendKind kind) { return kind == BackendKind::Onnx ? "onnx" : "file"; }

BackendKind parse_backend_kind(std::string_view name) {
    if (name == "onnx") return BackendKind::Onnx;
    if (name == "file") return BackendKind::File;
    throw ConfigError("unknown backend '" + std::string(name) + "' (expected onnx|file)");
}

EncoderSpec EncoderSpec::from_manifest(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw EnvironmentError("cannot open encoder manifest " + manifest.string());
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw FormatError(manifest.string() + " is not a JSON object");
    const auto base = manifest.parent_path();
    auto path_of = [&](const char* key) -> std::filesystem::path {
        if (!doc.contains(key)) return {};
        std::filesystem::path p = doc.at(key).get<std::string>();
        return p.is_absolute() ? p : base / p;
    };
    EncoderSpec spec;
    spec.backend = BackendKind::Onnx;
    try {
        spec.model_tag = doc.value("model_tag", spec.model_tag);
        spec.embed_dim = doc.at("embed_dim").get<std::size_t>();
        spec.context_length = doc.value("context_length", spec.context_length);
        spec.image_size = doc.value("image_size", spec.image_size);
        if (doc.contains("pixel_mean")) spec.pixel_mean = doc.at("pixel_mean").get<std::array<float, 3>>();
        if (doc.contains("pixel_std")) spec.pixel_std = doc.at("pixel_std").get<std::array<float, 3>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest.string() + ": " + e.what());
    }
    spec.text_model = path_of("text_model");
    spec.image_model = path_of("image_model");
    spec.token_embedding = path_of("token_embedding");
    spec.bpe_merges = path_of("bpe_merges");
    return spec;
}

void EncoderSpec::validate() const {
    auto need = [](const std::filesystem::path& p, const char* what) {
        if (p.empty()) throw ConfigError(std::string("encoder ") + what + " path is not set");
        if (!std::filesystem::exists(p)) throw EnvironmentError(std::string("encoder ") + what + " not found: " + p.string());
    };
    if (backend == BackendKind::File) {
        need(embedding_table, "embedding_table");
        return;
    }
    if (embed_dim == 0) throw ConfigError("encoder embed_dim must be > 0");
    need(text_model, "text_model");
    need(image_model, "image_model");
    need(token_embedding, "token_embedding");
    need(bpe_merges, "bpe_merges");
    if (context_length < 2) throw ConfigError("encoder context_length must be >= 2");
    if (image_size <= 0) throw ConfigError("encoder image_size must be > 0");
    for (float s : pixel_std) {
        if (!(s > 0.0f)) throw ConfigError("encoder pixel_std entries must be > 0");
    }
}

// ------------------------------------------------------------------- file

FileEncoder::FileEncoder(EmbeddingTable table, std::string model_tag, std::size_t expected_dim)
    : table_(std::move(table)), model_tag_(std::move(model_tag)) {
    if (table_.dim() == 0) throw BackendError("embedding table is empty");
    if (expected_dim != 0 && table_.dim() != expected_dim) {
        throw BackendError("embedding table dim " + std::to_string(table_.dim()) + " does not match embed_dim " +
                           std::to_string(expected_dim));
    }
}

std::shared_ptr<FileEncoder> FileEncoder::load(const EncoderSpec& spec) {
    spec.validate();
    return std::make_shared<FileEncoder>(EmbeddingTable::read(spec.embedding_table), spec.model_tag,
                                         spec.embed_dim);
}

EmbeddingMatrix FileEncoder::encode_texts(std::span<const std::string> texts) const {
    EmbeddingMatrix out(table_.dim());
    for (const auto& t : texts) {
        auto row = table_.find(t);
        if (!row) throw BackendError("file backend has no embedding for text '" + t + "'");
        out.append_row(*row);
    }
    return out;
}

EmbeddingMatrix FileEncoder::encode_frames(std::span<const Frame> frames) const {
    EmbeddingMatrix out(table_.dim());
    for (const auto& f : frames) {
        const std::string key = f.key();
        auto row = table_.find(key);
        if (!row) throw BackendError("file backend has no embedding for " + key);
        out.append_row(*row);
    }
    return out;
}

// ------------------------------------------------------------------- onnx

struct OnnxEncoder::Impl {
    EncoderSpec spec;
    BpeTokenizer tokenizer;
    EmbeddingTable token_embedding;
    std::size_t width = 0;
    mutable std::mutex text_mutex;
    mutable std::mutex image_mutex;
    mutable cv::dnn::Net text_net;
    mutable cv::dnn::Net image_net;
    mutable std::atomic<std::size_t> truncated{0};

    Impl(EncoderSpec s, BpeTokenizer tok, EmbeddingTable emb)
        : spec(std::move(s)), tokenizer(std::move(tok)), token_embedding(std::move(emb)) {}

    std::vector<float> run_text(const std::string& text) const {
        const TokenizedText tok = tokenizer.tokenize(text, spec.context_length);
        if (tok.truncated) {
            ++truncated;
            std::cerr << "warning: text truncated to " << spec.context_length << " tokens: '"
                      << text.substr(0, 60) << (text.size() > 60 ? "...'" : "'") << "\n";
        }
        const int L = static_cast<int>(spec.context_length);
        const int W = static_cast<int>(width);
        int emb_shape[] = {1, L, W};
        cv::Mat emb(3, emb_shape, CV_32F);
        int mask_shape[] = {1, L};
        cv::Mat mask(2, mask_shape, CV_32F, cv::Scalar(0));
        auto* dst = emb.ptr<float>();
        for (int p = 0; p < L; ++p) {
            auto row = token_embedding.find(std::to_string(tok.ids[static_cast<std::size_t>(p)]));
            if (!row) throw TokenizationError("token id " + std::to_string(tok.ids[p]) + " has no embedding row");
            std::copy(row->begin(), row->end(), dst + static_cast<std::ptrdiff_t>(p) * W);
        }
        mask.ptr<float>()[tok.eot_position] = 1.0f;

        std::lock_guard lock(text_mutex);
        try {
            text_net.setInput(emb, "token_embeddings");
            text_net.setInput(mask, "eot_mask");
            return flatten(text_net.forward());
        } catch (const cv::Exception& e) {
            throw BackendError(std::string("text tower inference failed: ") + e.what());
        }
    }

    std::vector<float> run_image(const Frame& frame) const {
        const int S = spec.image_size;
        if (frame.size != S || frame.rgb.size() != static_cast<std::size_t>(S) * S * 3) {
            throw ShapeError("frame must be " + std::to_string(S) + "x" + std::to_string(S) + "x3, got size " +
                             std::to_string(frame.size) + " with " + std::to_string(frame.rgb.size()) + " bytes");
        }
        int shape[] = {1, 3, S, S};
        cv::Mat blob(4, shape, CV_32F);
        float* dst = blob.ptr<float>();
        const std::size_t plane = static_cast<std::size_t>(S) * S;
        for (std::size_t px = 0; px < plane; ++px) {
            for (std::size_t c = 0; c < 3; ++c) {
                const float v = static_cast<float>(frame.rgb[px * 3 + c]) / 255.0f;
                dst[c * plane + px] = (v - spec.pixel_mean[c]) / spec.pixel_std[c];
            }
        }
        std::lock_guard lock(image_mutex);
        try {
            image_net.setInput(blob, "pixel_values");
            return flatten(image_net.forward());
        } catch (const cv::Exception& e) {
            throw BackendError(std::string("image tower inference failed: ") + e.what());
        }
    }

    static std::vector<float> flatten(const cv::Mat& out) {
        cv::Mat m = out.isContinuous() ? out : out.clone();
        const auto* p = m.ptr<float>();
        return std::vector<float>(p, p + m.total());
    }
};

OnnxEncoder::OnnxEncoder(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
OnnxEncoder::~OnnxEncoder() = default;

std::shared_ptr<OnnxEncoder> OnnxEncoder::load(const EncoderSpec& spec) {
    spec.validate();
    auto tok = BpeTokenizer::load(spec.bpe_merges);
    auto emb = EmbeddingTable::read(spec.token_embedding);
    if (emb.size() < tok.vocab_size()) {
        throw BackendError("token embedding table has " + std::to_string(emb.size()) + " rows, vocabulary has " +
                           std::to_string(tok.vocab_size()));
    }
    auto impl = std::make_unique<Impl>(spec, std::move(tok), std::move(emb));
    impl->width = impl->token_embedding.dim();
    try {
        impl->text_net = cv::dnn::readNetFromONNX(spec.text_model.string());
        impl->image_net = cv::dnn::readNetFromONNX(spec.image_model.string());
    } catch (const cv::Exception& e) {
        throw BackendError(std::string("cannot load ONNX model: ") + e.what());
    }
    impl->text_net.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
    impl->text_net.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);
    impl->image_net.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
    impl->image_net.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);

    std::shared_ptr<OnnxEncoder> enc(new OnnxEncoder(std::move(impl)));

    // self-check
    const auto t = enc->impl_->run_text("a photo of a person.");
    if (t.size() != spec.embed_dim) {
        throw BackendError("text tower produced dim " + std::to_string(t.size()) + ", expected " +
                           std::to_string(spec.embed_dim));
    }
    Frame gray{spec.image_size, std::vector<std::uint8_t>(
                                    static_cast<std::size_t>(spec.image_size) * spec.image_size * 3, 128)};
    const auto v = enc->impl_->run_image(gray);
    if (v.size() != spec.embed_dim) {
        throw BackendError("image tower produced dim " + std::to_string(v.size()) + ", expected " +
                           std::to_string(spec.embed_dim));
    }
    return enc;
}

std::size_t OnnxEncoder::embed_dim() const { return impl_->spec.embed_dim; }
std::string_view OnnxEncoder::model_tag() const { return impl_->spec.model_tag; }
std::size_t OnnxEncoder::truncated_texts() const { return impl_->truncated.load(); }

EmbeddingMatrix OnnxEncoder::encode_texts(std::span<const std::string> texts) const {
    EmbeddingMatrix out(impl_->spec.embed_dim);
    for (const auto& t : texts) out.append_row(impl_->run_text(t));
    return out;
}

EmbeddingMatrix OnnxEncoder::encode_frames(std::span<const Frame> frames) const {
    EmbeddingMatrix out(impl_->spec.embed_dim);
    for (const auto& f : frames) out.append_row(impl_->run_image(f));
    return out;
}

// ------------------------------------------------------------------ misc

std::shared_ptr<const Encoder> make_encoder(const EncoderSpec& spec) {
    if (spec.backend == BackendKind::File) return FileEncoder::load(spec);
    return OnnxEncoder::load(spec);
}

EmbeddingTable dump_embeddings(const Encoder& source, std::span<const std::string> texts,
                               std::span<const Frame> frames) {
    EmbeddingTable table(source.embed_dim());
    if (!texts.empty()) {
        const auto m = source.encode_texts(texts);
        for (std::size_t i = 0; i < texts.size(); ++i) table.put(texts[i], m.row(i));
    }
    if (!frames.empty()) {
        const auto m = source.encode_frames(frames);
        for (std::size_t i = 0; i < frames.size(); ++i) table.put(frames[i].key(), m.row(i));
    }
    return table;
}

}  // namespace zsar
