#pragma once

#include "zsar/chat_transport.hpp"
#include "zsar/labels.hpp"
#include "zsar/response_parser.hpp"

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace zsar {

/// System prompts, one per generated descriptor kind. The user message that
/// accompanies them is the bare normalized class label.
namespace prompts {
extern const std::string_view kDecomposition;
extern const std::string_view kDescription;
extern const std::string_view kContext;
}  // namespace prompts

struct DescriptorSet {
    ActionClass action;
    std::vector<std::string> decomposition;  ///< exactly 3 ordered steps
    std::string description;
    std::string context;
    std::vector<std::string> objects;
    std::string llm_model_id;
    std::string generated_at;  ///< ISO-8601 UTC

    /// Throws DomainError if any type invariant is violated.
    void validate() const;

    friend bool operator==(const DescriptorSet&, const DescriptorSet&) = default;
};

/// Issues the three descriptor queries for one class. Every query is retried
/// with the identical request until it parses or `max_retries` calls were
/// made; the call count per query never exceeds `max_retries`.
class DescriptorGenerator {
public:
    DescriptorGenerator(ChatTransport& transport, LlmConfig config);

    std::vector<std::string> generate_decomposition(const ActionClass& action);
    std::string generate_description(const ActionClass& action);
    ContextInfo generate_context(const ActionClass& action);

    /// All three queries; stamps model id and generation time.
    DescriptorSet generate(const ActionClass& action);

    const LlmConfig& config() const noexcept { return config_; }

private:
    template <class Parse>
    auto query(std::string_view system_prompt, const ActionClass& action, Parse parse);

    ChatTransport& transport_;
    LlmConfig config_;
};

/// JSON document mapping normalized label -> descriptor record. Keys are
/// written in sorted order. Thread-safe; `save` writes atomically.
class DescriptorCache {
public:
    DescriptorCache() = default;
    explicit DescriptorCache(std::filesystem::path path);
    DescriptorCache(DescriptorCache&& other) noexcept;
    DescriptorCache& operator=(DescriptorCache&& other) noexcept;

    /// Loads `path` if it exists; a missing file is an empty cache.
    static DescriptorCache open(const std::filesystem::path& path);

    std::optional<DescriptorSet> get(const ActionClass& action, std::string_view llm_model_id) const;
    void put(const DescriptorSet& ds);
    std::size_t size() const;

    /// No-op for an in-memory cache (empty path).
    void save() const;

    const std::filesystem::path& path() const noexcept { return path_; }

    std::string to_json() const;
    static DescriptorCache from_json(std::string_view text, std::filesystem::path path = {});

private:
    struct Record {
        std::vector<std::string> decomposition;
        std::string description;
        std::string context;
        std::vector<std::string> objects;
        std::string llm_model_id;
        std::string generated_at;
    };

    std::filesystem::path path_;
    mutable std::mutex mutex_;
    std::map<std::string, Record> records_;
};

struct ClassFailure {
    ActionClass action;
    std::string error_kind;
    std::string message;
};

struct GenerateAllResult {
    std::map<std::size_t, DescriptorSet> descriptors;  ///< keyed by class index
    std::vector<ClassFailure> failures;                ///< ordered by class index
    std::size_t generated = 0;                         ///< cold classes that succeeded
    std::size_t cache_hits = 0;

    bool complete() const noexcept { return failures.empty(); }
};

/// Returns cached sets for warm classes and generates the rest, persisting
/// each new set before returning. Per-class failures are collected rather
/// than thrown. `workers` bounds concurrent classes.
GenerateAllResult generate_all(const LabelSpace& labels, DescriptorGenerator& generator,
                               DescriptorCache& cache, unsigned workers = 1);

/// Cached sets only; classes without an entry are listed in `failures` with
/// kind "MissingDescriptors". Makes no LLM calls.
GenerateAllResult lookup_all(const LabelSpace& labels, const DescriptorCache& cache,
                             std::string_view llm_model_id);

}  // namespace zsar
