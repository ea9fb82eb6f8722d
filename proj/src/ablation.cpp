#include "zsar/ablation.hpp"

#include "zsar/errors.hpp"

#include <json.hpp>

#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>

namespace zsar {

namespace {

const char* yes_no(bool b) { return b ? "yes" : "no"; }

std::string spec_identity(const EncoderSpec& s) {
    std::ostringstream k;
    k << to_string(s.backend) << '|' << s.model_tag << '|' << s.embed_dim << '|' << s.embedding_table.string() << '|'
      << s.text_model.string() << '|' << s.image_model.string() << '|' << s.token_embedding.string() << '|'
      << s.bpe_merges.string() << '|' << s.context_length << '|' << s.image_size;
    for (float v : s.pixel_mean) k << '|' << v;
    for (float v : s.pixel_std) k << '|' << v;
    return k.str();
}

RunConfig with_backbone(const RunConfig& base, const std::string& name) {
    RunConfig cfg = base;
    cfg.use_backbone(name);
    return cfg;
}

}  // namespace

AblationPlan plan_descriptor_ablation(const RunConfig& base) {
    AblationPlan plan{"descriptors", {"Descriptors"}, {}};
    for (auto kind : {DescriptorKind::Class, DescriptorKind::Description, DescriptorKind::Decomposition,
                      DescriptorKind::Context, DescriptorKind::Combination}) {
        RunConfig cfg = base;
        cfg.descriptors.kinds = {kind};
        plan.cells.push_back({{std::string(to_string(kind))}, std::move(cfg)});
    }
    return plan;
}

AblationPlan plan_prompt_grid(const RunConfig& base) {
    AblationPlan plan{"prompts", {"Backbone", "Templates", "Class"}, {}};
    for (const auto& bb : base.ablation.backbones) {
        for (bool templates : {false, true}) {
            for (bool prepend : {false, true}) {
                RunConfig cfg = with_backbone(base, bb);
                cfg.descriptors.use_templates = templates;
                cfg.descriptors.prepend_class = prepend;
                plan.cells.push_back({{bb, yes_no(templates), yes_no(prepend)}, std::move(cfg)});
            }
        }
    }
    return plan;
}

AblationPlan plan_backbone_frames(const RunConfig& base) {
    AblationPlan plan{"backbone-frames", {"Backbone", "N"}, {}};
    for (const auto& bb : base.ablation.backbones) {
        for (std::size_t n : base.ablation.frames) {
            RunConfig cfg = with_backbone(base, bb);
            cfg.frames = n;
            plan.cells.push_back({{bb, std::to_string(n)}, std::move(cfg)});
        }
    }
    return plan;
}

AblationPlan plan_llm_ablation(const RunConfig& base) {
    AblationPlan plan{"llm", {"LLM", "Descriptors"}, {}};
    for (const auto& id : base.ablation.llm_ids) {
        for (auto kind : {DescriptorKind::Description, DescriptorKind::Decomposition, DescriptorKind::Context,
                          DescriptorKind::Combination}) {
            RunConfig cfg = base;
            cfg.llm.model_id = id;
            cfg.cache = base.cache_for(id);
            cfg.descriptors.kinds = {kind};
            plan.cells.push_back({{id, std::string(to_string(kind))}, std::move(cfg)});
        }
    }
    return plan;
}

const std::vector<std::string>& ablation_grids() {
    static const std::vector<std::string> grids{"descriptors", "prompts", "backbone-frames", "llm"};
    return grids;
}

AblationPlan plan_ablation(std::string_view grid, const RunConfig& base) {
    if (grid == "descriptors") return plan_descriptor_ablation(base);
    if (grid == "prompts") return plan_prompt_grid(base);
    if (grid == "backbone-frames") return plan_backbone_frames(base);
    if (grid == "llm") return plan_llm_ablation(base);
    throw ConfigError("unknown ablation grid '" + std::string(grid) +
                      "' (expected descriptors|prompts|backbone-frames|llm)");
}

AblationTable run_ablation(const AblationPlan& plan, const EvalDeps& deps) {
    if (plan.cells.empty()) throw ConfigError("ablation '" + plan.name + "' has no cells");
    std::mutex mutex;
    std::map<std::string, std::shared_ptr<const Encoder>> encoders;
    EvalDeps shared = deps;
    shared.encoder_factory = [&](const EncoderSpec& spec) {
        const std::string key = spec_identity(spec);
        std::lock_guard lock(mutex);
        auto it = encoders.find(key);
        if (it == encoders.end()) it = encoders.emplace(key, deps.encoder_factory(spec)).first;
        return it->second;
    };

    AblationTable table{plan.name, plan.columns, {}, {}};
    for (const auto& cell : plan.cells) {
        const EvalReport report = evaluate(cell.config, shared);
        if (table.split_names.empty()) {
            for (const auto& s : report.per_split) table.split_names.push_back(s.name);
        }
        AblationRow row{cell.labels, report.mean, {}};
        for (const auto& s : report.per_split) row.per_split.push_back({s.top1, s.top5});
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string AblationTable::to_json() const {
    nlohmann::json j;
    j["ablation"] = name;
    j["columns"] = columns;
    j["splits"] = split_names;
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json per = nlohmann::json::array();
        for (const auto& a : r.per_split) per.push_back({{"top1", a.top1}, {"top5", a.top5}});
        rows_j.push_back({{"labels", r.labels}, {"top1", r.mean.top1}, {"top5", r.mean.top5}, {"per_split", per}});
    }
    j["rows"] = std::move(rows_j);
    return j.dump(2);
}

std::string AblationTable::to_table() const {
    std::vector<std::size_t> widths;
    for (std::size_t c = 0; c < columns.size(); ++c) {
        std::size_t w = columns[c].size();
        for (const auto& r : rows) w = std::max(w, r.labels.at(c).size());
        widths.push_back(w);
    }
    std::ostringstream out;
    out << "ablation: " << name << "\n";
    for (std::size_t c = 0; c < columns.size(); ++c) {
        out << std::left << std::setw(static_cast<int>(widths[c])) << columns[c] << "  ";
    }
    out << std::right << std::setw(7) << "Top-1" << std::setw(9) << "Top-5" << "\n";
    out << std::fixed << std::setprecision(2);
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < columns.size(); ++c) {
            out << std::left << std::setw(static_cast<int>(widths[c])) << r.labels[c] << "  ";
        }
        out << std::right << std::setw(7) << 100.0 * r.mean.top1 << std::setw(9) << 100.0 * r.mean.top5 << "\n";
    }
    return out.str();
}

}  // namespace zsar
