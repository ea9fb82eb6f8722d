#include "zsar/prompt_assembly.hpp"

#include "zsar/errors.hpp"

#include <array>
#include <cctype>
#include <fstream>
#include <sstream>

namespace zsar {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::size_t count_placeholders(std::string_view t) {
    std::size_t n = 0;
    for (auto pos = t.find("{}"); pos != std::string_view::npos; pos = t.find("{}", pos + 2)) ++n;
    return n;
}

struct KindMask {
    bool cls = false;
    bool decomposition = false;
    bool description = false;
    bool context = false;
};

KindMask mask_of(const std::vector<DescriptorKind>& kinds) {
    KindMask m;
    for (auto k : kinds) {
        switch (k) {
            case DescriptorKind::Class: m.cls = true; break;
            case DescriptorKind::Decomposition: m.decomposition = true; break;
            case DescriptorKind::Description: m.description = true; break;
            case DescriptorKind::Context: m.context = true; break;
            case DescriptorKind::Combination:
                m = KindMask{true, true, true, true};
                break;
        }
    }
    return m;
}

}  // namespace

std::string_view to_string(DescriptorKind kind) {
    switch (kind) {
        case DescriptorKind::Class: return "class";
        case DescriptorKind::Decomposition: return "decomposition";
        case DescriptorKind::Description: return "description";
        case DescriptorKind::Context: return "context";
        case DescriptorKind::Combination: return "combination";
    }
    return "?";
}

DescriptorKind parse_descriptor_kind(std::string_view name) {
    std::string n = trim(name);
    for (auto& c : n) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    for (auto k : {DescriptorKind::Class, DescriptorKind::Decomposition, DescriptorKind::Description,
                   DescriptorKind::Context, DescriptorKind::Combination}) {
        if (n == to_string(k)) return k;
    }
    if (n == "all") return DescriptorKind::Combination;
    throw ConfigError("unknown descriptor kind '" + std::string(name) + "'");
}

std::vector<DescriptorKind> parse_descriptor_kinds(std::string_view csv) {
    std::vector<DescriptorKind> out;
    std::size_t start = 0;
    while (start <= csv.size()) {
        auto comma = csv.find(',', start);
        if (comma == std::string_view::npos) comma = csv.size();
        const std::string item = trim(csv.substr(start, comma - start));
        if (!item.empty()) out.push_back(parse_descriptor_kind(item));
        start = comma + 1;
    }
    if (out.empty()) throw ConfigError("descriptor kind list is empty");
    return out;
}

std::string format_descriptor_kinds(const std::vector<DescriptorKind>& kinds) {
    std::string out;
    for (auto k : kinds) {
        if (!out.empty()) out += ',';
        out += to_string(k);
    }
    return out;
}

DescriptorConfig DescriptorConfig::full() {
    return DescriptorConfig{{DescriptorKind::Combination}, true, true, default_templates()};
}

void DescriptorConfig::validate() const {
    if (kinds.empty()) throw ConfigError("descriptor kinds must not be empty");
    if (!use_templates) return;
    if (templates.empty()) throw ConfigError("use_templates is set but no templates are configured");
    for (const auto& t : templates) {
        if (count_placeholders(t) != 1) {
            throw ConfigError("template '" + t + "' must contain exactly one {} placeholder");
        }
    }
}

bool DescriptorConfig::needs_descriptors() const {
    const KindMask m = mask_of(kinds);
    return m.decomposition || m.description || m.context;
}

const std::vector<std::string>& default_templates() {
    static const std::vector<std::string> templates = [] {
        std::vector<std::string> out;
        const std::array<std::string_view, 4> stems{"a photo of", "a video of", "a example of",
                                                    "a demonstration of"};
        const std::array<std::string_view, 7> people{
            " {}.",           " a person {}.",        " a person using {}.",    " a person doing {}.",
            " a person during {}.", " a person performing {}.", " a person practicing {}."};
        for (auto stem : stems) {
            for (auto p : people) out.push_back(std::string(stem) + std::string(p));
        }
        return out;
    }();
    return templates;
}

std::vector<std::string> parse_templates(std::string_view text) {
    std::vector<std::string> out;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        if (count_placeholders(t) != 1) {
            throw FormatError("template '" + t + "' must contain exactly one {} placeholder");
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<std::string> load_templates(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open template file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    auto out = parse_templates(ss.str());
    if (out.empty()) throw FormatError("template file " + path.string() + " contains no templates");
    return out;
}

std::string apply_template(std::string_view tmpl, std::string_view text) {
    const auto pos = tmpl.find("{}");
    if (pos == std::string_view::npos) throw DomainError("template has no {} placeholder");
    std::string out;
    out.reserve(tmpl.size() + text.size());
    out.append(tmpl.substr(0, pos));
    out.append(text);
    out.append(tmpl.substr(pos + 2));
    return out;
}

std::vector<std::string> base_texts(const ActionClass& action, const DescriptorSet* ds,
                                    const std::vector<DescriptorKind>& kinds) {
    const KindMask m = mask_of(kinds);
    if ((m.decomposition || m.description || m.context) && ds == nullptr) {
        throw DomainError("descriptor kinds other than 'class' need descriptors for '" + action.display + "'");
    }
    std::vector<std::string> out;
    if (m.cls) out.push_back(action.display);
    if (m.decomposition) out.insert(out.end(), ds->decomposition.begin(), ds->decomposition.end());
    if (m.description) out.push_back(ds->description);
    if (m.context) {
        out.push_back(ds->context);
        out.insert(out.end(), ds->objects.begin(), ds->objects.end());
    }
    return out;
}

std::vector<std::string> base_texts(const DescriptorSet& ds, const std::vector<DescriptorKind>& kinds) {
    return base_texts(ds.action, &ds, kinds);
}

PromptBatch assemble(const ActionClass& action, const DescriptorSet* ds, const DescriptorConfig& cfg) {
    cfg.validate();
    std::vector<std::string> base = base_texts(action, ds, cfg.kinds);
    if (cfg.prepend_class) {
        for (auto& t : base) {
            if (t != action.display) t = action.display + ". " + t;
        }
    }
    PromptBatch batch{action, {}};
    if (!cfg.use_templates) {
        batch.texts = std::move(base);
        return batch;
    }
    batch.texts.reserve(base.size() * cfg.templates.size());
    for (const auto& t : base) {
        for (const auto& tmpl : cfg.templates) batch.texts.push_back(apply_template(tmpl, t));
    }
    return batch;
}

PromptBatch assemble(const DescriptorSet& ds, const DescriptorConfig& cfg) {
    return assemble(ds.action, &ds, cfg);
}

}  // namespace zsar
