#pragma once

#include "zsar/evaluation.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace zsar {

struct AblationCell {
    std::vector<std::string> labels;  ///< one value per label column
    RunConfig config;                 ///< the standalone config of this cell
};

struct AblationPlan {
    std::string name;
    std::vector<std::string> columns;  ///< label column headers
    std::vector<AblationCell> cells;
};

/// kinds in {class}, {description}, {decomposition}, {context}, {combination}.
AblationPlan plan_descriptor_ablation(const RunConfig& base);

/// (use_templates, prepend_class) in {no,yes}^2 for each ablation backbone.
AblationPlan plan_prompt_grid(const RunConfig& base);

/// ablation backbones x ablation frame counts.
AblationPlan plan_backbone_frames(const RunConfig& base);

/// ablation LLM ids x kinds {description, decomposition, context,
/// combination}; every id reads and fills its own descriptor cache.
AblationPlan plan_llm_ablation(const RunConfig& base);

/// "descriptors" | "prompts" | "backbone-frames" | "llm".
AblationPlan plan_ablation(std::string_view grid, const RunConfig& base);
const std::vector<std::string>& ablation_grids();

struct AblationRow {
    std::vector<std::string> labels;
    Accuracy mean;
    std::vector<Accuracy> per_split;
};

struct AblationTable {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::string> split_names;
    std::vector<AblationRow> rows;

    std::string to_json() const;
    /// Label columns, then Top-1 and Top-5 in percent.
    std::string to_table() const;
};

/// Evaluates every cell (encoders shared across cells with equal specs).
AblationTable run_ablation(const AblationPlan& plan, const EvalDeps& deps = {});

}  // namespace zsar
