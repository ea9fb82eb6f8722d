#pragma once

#include "zsar/chat_transport.hpp"
#include "zsar/classifier.hpp"
#include "zsar/descriptors.hpp"
#include "zsar/encoders.hpp"
#include "zsar/labels.hpp"
#include "zsar/prompt_assembly.hpp"
#include "zsar/video.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace zsar {

struct ManifestEntry {
    std::filesystem::path path;  ///< resolved against the dataset root
    std::size_t class_index = 0;
};

struct SplitManifest {
    std::string name;
    std::vector<ManifestEntry> entries;
};

/// Split file lines are "<relative-path>\t<class-id>" where class-id is a
/// 0-based index or a raw class id; any whitespace separates the columns.
/// A line without a class column takes its class from the first path
/// component (UCF101 testlist layout). Blank and `#` lines are skipped.
SplitManifest parse_split(std::string_view text, const LabelSpace& classes, const std::filesystem::path& root,
                          std::string name, std::string_view origin = "split");

struct DatasetRef {
    std::string name;
    std::filesystem::path root;      ///< defaults to the first split file's directory
    std::filesystem::path classes;   ///< one raw id per line
    std::vector<std::filesystem::path> splits;
};

struct DatasetManifest {
    std::string name;
    LabelSpace classes;
    std::vector<SplitManifest> splits;

    /// Throws ConfigError / FormatError / EnvironmentError. Sample paths are
    /// not touched here; a missing file surfaces as a per-sample DecodeError.
    static DatasetManifest load(const DatasetRef& ref);
};

struct AblationAxes {
    std::vector<std::string> backbones{"ViT-B/32", "ViT-B/16"};
    std::vector<std::size_t> frames{16, 32};
    std::vector<std::string> llm_ids{"gpt-3.5-turbo"};
};

struct RunConfig {
    EncoderSpec encoder;
    std::string backbone;                          ///< key into `backbones`, informational when empty
    std::map<std::string, EncoderSpec> backbones;  ///< named encoders for the ablation grids
    std::size_t frames = 16;                       ///< N
    SamplingAnchor sampling = SamplingAnchor::Start;
    bool normalize_before_average = false;
    DescriptorConfig descriptors;                  ///< templates held inline
    LlmConfig llm;
    std::filesystem::path cache;                   ///< descriptor cache for llm.model_id
    std::map<std::string, std::filesystem::path> llm_caches;  ///< per-LLM caches; derived from `cache` otherwise
    DatasetRef dataset;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    double max_failure_rate = 0.01;
    AblationAxes ablation;

    /// JSON config. Relative paths resolve against `base_dir`. "encoder"
    /// is either a full spec or {"backend": "onnx", "manifest": path};
    /// "backbone" selects a "backbones" entry when "encoder" is absent.
    /// "descriptors.templates" is a file path or an inline array.
    static RunConfig from_json(std::string_view text, const std::filesystem::path& base_dir = {});
    static RunConfig load(const std::filesystem::path& path);

    /// Complete snapshot (absolute paths, inline templates). Loading it
    /// back yields an equal configuration.
    std::string to_json(int indent = 2) const;

    /// `check_files` also requires referenced encoder and dataset files.
    void validate(bool check_files = true) const;

    /// Selects a named backbone as the active encoder (ConfigError if unknown).
    void use_backbone(const std::string& name);

    /// Cache path used for `llm_id` (explicit entry, `cache` for the active
    /// model id, else `cache` with the sanitized id spliced into its stem).
    std::filesystem::path cache_for(const std::string& llm_id) const;
};

struct SampleOutcome {
    std::string path;
    std::size_t truth = 0;
    bool failed = false;
    std::string error;                   ///< "<Kind>: message" when failed
    std::vector<std::size_t> top;        ///< up to 5 class indices, best first
    std::vector<double> top_scores;
};

struct SplitResult {
    std::string name;
    double top1 = 0.0;
    double top5 = 0.0;
    std::size_t scored = 0;
    std::size_t failed = 0;
    std::vector<SampleOutcome> samples;  ///< manifest order
};

struct Accuracy {
    double top1 = 0.0;
    double top5 = 0.0;
};

/// Top-1/Top-5 over the non-failed outcomes. Top-5 uses min(5, classes).
SplitResult score_split(std::string name, std::vector<SampleOutcome> samples);

/// Unweighted mean of per-split accuracies. DomainError on an empty list.
Accuracy aggregate(const std::vector<SplitResult>& splits);

struct EvalReport {
    std::string dataset;
    std::string model_tag;
    std::vector<SplitResult> per_split;
    Accuracy mean;
    std::size_t classes = 0;
    std::vector<std::size_t> prompts_per_class;  ///< M_j
    std::string config_json;                     ///< RunConfig snapshot
    std::string started_at;
    double wall_time_s = 0.0;

    std::string to_json(bool include_samples = true) const;
    std::string to_table() const;
};

/// Hooks that tests and the CLI swap out.
struct EvalDeps {
    std::function<std::shared_ptr<const Encoder>(const EncoderSpec&)> encoder_factory = make_encoder;
    /// When set, cold descriptor-cache entries are generated; otherwise a
    /// cold entry is a MissingDescriptorsError naming the classes.
    ChatTransport* transport = nullptr;
};

/// Descriptor sets for every class (empty map for Class-only configs).
std::map<std::size_t, DescriptorSet> resolve_descriptors(const RunConfig& cfg, const LabelSpace& labels,
                                                         ChatTransport* transport);

/// One ClassEmbedding per label, computed from the assembled prompts.
std::vector<ClassEmbedding> build_class_embeddings(const LabelSpace& labels,
                                                   const std::map<std::size_t, DescriptorSet>& descriptors,
                                                   const DescriptorConfig& dcfg, const Encoder& encoder,
                                                   bool normalize_before_average, unsigned workers = 1);

/// Samples, encodes and classifies one video.
Prediction classify_video(const std::filesystem::path& video, const std::vector<ClassEmbedding>& classes,
                          const Encoder& encoder, std::size_t frames, SamplingAnchor anchor,
                          bool normalize_before_average, int image_size = 224);

/// Runs every split. Per-sample DecodeError/EmptyVideoError outcomes are
/// recorded and excluded; more than `max_failure_rate` of a split failing
/// raises EvaluationAborted.
EvalReport evaluate(const RunConfig& cfg, const EvalDeps& deps = {});

}  // namespace zsar
