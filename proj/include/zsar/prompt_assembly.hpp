#pragma once

#include "zsar/descriptors.hpp"
#include "zsar/labels.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace zsar {

enum class DescriptorKind { Class, Decomposition, Description, Context, Combination };

std::string_view to_string(DescriptorKind kind);
DescriptorKind parse_descriptor_kind(std::string_view name);
/// Comma-separated list, e.g. "class,context".
std::vector<DescriptorKind> parse_descriptor_kinds(std::string_view csv);
std::string format_descriptor_kinds(const std::vector<DescriptorKind>& kinds);

/// Defaults are the bare-label baseline; `full()` is Combination with class
/// prepending and the bundled templates.
struct DescriptorConfig {
    std::vector<DescriptorKind> kinds{DescriptorKind::Class};
    bool prepend_class = false;
    bool use_templates = false;
    std::vector<std::string> templates;

    static DescriptorConfig full();

    /// Throws ConfigError on an empty kind list or, with templates enabled, an
    /// empty template list or a template without exactly one "{}".
    void validate() const;

    /// True when any selected kind needs LLM-generated descriptors.
    bool needs_descriptors() const;

    friend bool operator==(const DescriptorConfig&, const DescriptorConfig&) = default;
};

struct PromptBatch {
    ActionClass action;
    std::vector<std::string> texts;
};

/// The 28 video templates bundled as data/templates/default.txt.
const std::vector<std::string>& default_templates();

/// One template per line; blank lines and lines starting with '#' ignored.
std::vector<std::string> load_templates(const std::filesystem::path& path);
std::vector<std::string> parse_templates(std::string_view text);

/// Ordered base texts. Selected kinds are emitted in the fixed order
/// Class, Decomposition, Description, Context; Combination selects all four.
/// `ds` may be null only when the kinds reduce to {Class}.
std::vector<std::string> base_texts(const ActionClass& action, const DescriptorSet* ds,
                                    const std::vector<DescriptorKind>& kinds);
std::vector<std::string> base_texts(const DescriptorSet& ds, const std::vector<DescriptorKind>& kinds);

/// Applies class prepending ("<label>. <text>", never to the label itself)
/// and then the full text x template cross product.
PromptBatch assemble(const ActionClass& action, const DescriptorSet* ds, const DescriptorConfig& cfg);
PromptBatch assemble(const DescriptorSet& ds, const DescriptorConfig& cfg);

/// Substitutes the single "{}" placeholder.
std::string apply_template(std::string_view tmpl, std::string_view text);

}  // namespace zsar
