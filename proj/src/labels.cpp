#include "zsar/labels.hpp"

#include "zsar/errors.hpp"

#include <cctype>
#include <fstream>
#include <set>

namespace zsar {

namespace {

bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }
bool is_lower(char c) { return std::islower(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

}  // namespace

std::string normalize_label(std::string_view raw_id) {
    std::string spaced;
    spaced.reserve(raw_id.size() + 8);
    for (std::size_t i = 0; i < raw_id.size(); ++i) {
        const char c = raw_id[i];
        if (c == '_' || is_space(c)) {
            spaced.push_back(' ');
            continue;
        }
        if (i > 0 && is_upper(c)) {
            const char prev = raw_id[i - 1];
            const bool next_lower = i + 1 < raw_id.size() && is_lower(raw_id[i + 1]);
            // "eyeMakeup" and the tail of an acronym run ("HTMLParser" -> "html parser")
            if (is_lower(prev) || is_digit(prev) || (is_upper(prev) && next_lower)) {
                spaced.push_back(' ');
            }
        }
        spaced.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }

    std::string out;
    out.reserve(spaced.size());
    for (char c : spaced) {
        if (c == ' ' && (out.empty() || out.back() == ' ')) continue;
        out.push_back(c);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

ActionClass ActionClass::from_raw(std::string raw_id, std::size_t index) {
    if (raw_id.empty()) throw DomainError("action class id must be non-empty");
    ActionClass cls;
    cls.display = normalize_label(raw_id);
    if (cls.display.empty()) throw DomainError("action class id '" + raw_id + "' normalizes to nothing");
    cls.raw_id = std::move(raw_id);
    cls.index = index;
    return cls;
}

LabelSpace::LabelSpace(const std::vector<std::string>& raw_ids) {
    std::set<std::string> seen;
    classes_.reserve(raw_ids.size());
    for (const auto& id : raw_ids) {
        auto cls = ActionClass::from_raw(id, classes_.size());
        if (!seen.insert(cls.display).second) {
            throw DomainError("duplicate action class '" + id + "' (normalized: '" + cls.display + "')");
        }
        classes_.push_back(std::move(cls));
    }
}

std::optional<std::size_t> LabelSpace::find(std::string_view id) const {
    for (const auto& c : classes_) {
        if (c.raw_id == id) return c.index;
    }
    const std::string norm = normalize_label(id);
    for (const auto& c : classes_) {
        if (c.display == norm) return c.index;
    }
    return std::nullopt;
}

LabelSpace LabelSpace::load(const std::filesystem::path& classes_file) {
    std::ifstream in(classes_file);
    if (!in) throw IoError("cannot open classes file " + classes_file.string());
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto sp = t.find_first_of(" \t");
        if (sp != std::string::npos) {
            const std::string head = t.substr(0, sp);
            bool numeric = !head.empty();
            for (char c : head) numeric = numeric && is_digit(c);
            if (numeric) t = trim(std::string_view(t).substr(sp + 1));
        }
        ids.push_back(t);
    }
    if (ids.empty()) throw FormatError("classes file " + classes_file.string() + " lists no classes");
    return LabelSpace(ids);
}

}  // namespace zsar
