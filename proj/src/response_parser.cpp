#include "zsar/response_parser.hpp"

#include "zsar/errors.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace zsar {

namespace {

struct QuoteKind {
    std::string_view open;
    std::string_view close;
};

// Typographic variants show up when models imitate the prompt's own examples.
constexpr std::array<QuoteKind, 6> kQuotes{{
    {"'", "'"},
    {"\"", "\""},
    {"\xE2\x80\x98", "\xE2\x80\x99"},  // ‘ ’
    {"\xE2\x80\x99", "\xE2\x80\x99"},  // ’ ’
    {"\xE2\x80\x9C", "\xE2\x80\x9D"},  // “ ”
    {"\xE2\x80\x9D", "\xE2\x80\x9D"},  // ” ”
}};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

const QuoteKind* quote_at(std::string_view text, std::size_t pos) {
    for (const auto& q : kQuotes) {
        if (text.substr(pos, q.open.size()) == q.open) return &q;
    }
    return nullptr;
}

class Reader {
public:
    explicit Reader(std::string_view text) : text_(text) {}

    std::optional<PyValue> value(std::size_t& pos) {
        skip_ws(pos);
        if (pos >= text_.size()) return std::nullopt;
        if (text_[pos] == '[') return list(pos);
        if (text_[pos] == '{') return dict(pos, true);
        if (auto s = string(pos)) return PyValue{std::move(*s)};
        return std::nullopt;
    }

    std::optional<std::string> string(std::size_t& pos) {
        const QuoteKind* q = quote_at(text_, pos);
        if (q == nullptr) return std::nullopt;
        std::size_t i = pos + q->open.size();
        std::string out;
        while (i < text_.size()) {
            if (text_.substr(i, q->close.size()) == q->close) {
                pos = i + q->close.size();
                return out;
            }
            const char c = text_[i];
            if (c == '\\' && i + 1 < text_.size()) {
                const char e = text_[i + 1];
                switch (e) {
                    case 'n': out.push_back('\n'); break;
                    case 't': out.push_back('\t'); break;
                    case '\\': out.push_back('\\'); break;
                    case '\'': out.push_back('\''); break;
                    case '"': out.push_back('"'); break;
                    default:
                        out.push_back('\\');
                        out.push_back(e);
                }
                i += 2;
                continue;
            }
            if (c == '\n') return std::nullopt;  // python literals do not span lines
            out.push_back(c);
            ++i;
        }
        return std::nullopt;
    }

    std::optional<PyValue> list(std::size_t& pos) {
        std::size_t i = pos + 1;
        PyValue::List items;
        skip_ws(i);
        while (i < text_.size() && text_[i] != ']') {
            auto v = value(i);
            if (!v) return std::nullopt;
            items.push_back(std::move(*v));
            skip_ws(i);
            if (i < text_.size() && text_[i] == ',') {
                ++i;
                skip_ws(i);
            } else if (i < text_.size() && text_[i] != ']') {
                return std::nullopt;
            }
        }
        if (i >= text_.size()) return std::nullopt;
        pos = i + 1;
        return PyValue{std::move(items)};
    }

    /// With `braced == false` the opening brace is implied and the body may
    /// end at end-of-text or at the first token that cannot continue it.
    std::optional<PyValue> dict(std::size_t& pos, bool braced) {
        std::size_t i = braced ? pos + 1 : pos;
        PyValue::Dict entries;
        skip_ws(i);
        while (i < text_.size() && text_[i] != '}') {
            std::size_t entry_start = i;
            auto key = string(i);
            if (!key) {
                if (braced) return std::nullopt;
                i = entry_start;
                break;
            }
            skip_ws(i);
            if (i >= text_.size() || text_[i] != ':') {
                if (braced) return std::nullopt;
                i = entry_start;
                break;
            }
            ++i;
            auto v = value(i);
            if (!v) {
                if (braced) return std::nullopt;
                i = entry_start;
                break;
            }
            entries.emplace_back(std::move(*key), std::move(*v));
            skip_ws(i);
            if (i < text_.size() && text_[i] == ',') {
                ++i;
                skip_ws(i);
            } else if (i < text_.size() && text_[i] != '}') {
                if (braced) return std::nullopt;
                break;
            }
        }
        if (braced) {
            if (i >= text_.size()) return std::nullopt;
            ++i;
        } else if (i < text_.size() && text_[i] == '}') {
            ++i;
        }
        if (entries.empty()) return std::nullopt;
        pos = i;
        return PyValue{std::move(entries)};
    }

private:
    void skip_ws(std::size_t& pos) const {
        while (pos < text_.size() && is_space(text_[pos])) ++pos;
    }

    std::string_view text_;
};

std::optional<std::vector<std::string>> string_list(const PyValue& v) {
    const auto* list = v.as_list();
    if (list == nullptr) return std::nullopt;
    std::vector<std::string> out;
    out.reserve(list->size());
    for (const auto& item : *list) {
        const auto* s = item.as_string();
        if (s == nullptr) return std::nullopt;
        out.push_back(trim(*s));
    }
    return out;
}

std::optional<ContextInfo> context_from(const PyValue& v) {
    const auto* dict = v.as_dict();
    if (dict == nullptr) return std::nullopt;
    std::optional<std::string> context;
    std::optional<std::vector<std::string>> objects;
    for (const auto& [key, value] : *dict) {
        const std::string k = lower(trim(key));
        if (k == "context" && !context) {
            if (const auto* s = value.as_string()) {
                context = trim(*s);
            } else if (auto parts = string_list(value)) {
                std::string joined;
                for (const auto& p : *parts) {
                    if (p.empty()) continue;
                    if (!joined.empty()) joined += ", ";
                    joined += p;
                }
                context = joined;
            }
        } else if (k == "objects" && !objects) {
            objects = string_list(value);
        }
    }
    if (!context || !objects) return std::nullopt;
    return ContextInfo{std::move(*context), std::move(*objects)};
}

// Strips one leading "Description:"-style label.
std::string strip_prefix(std::string text) {
    static constexpr std::array<std::string_view, 5> kLabels{
        "description", "answer", "response", "output", "action description"};
    const std::string low = lower(text);
    // Imitations of the prompt's exemplar: "Action label: x. Description: ..."
    if (low.rfind("action label", 0) == 0) {
        const auto at = low.find("description:");
        if (at != std::string::npos) return trim(std::string_view(text).substr(at + 12));
    }
    for (auto label : kLabels) {
        if (low.rfind(label, 0) != 0) continue;
        std::size_t i = label.size();
        while (i < low.size() && (low[i] == ' ' || low[i] == '\t')) ++i;
        if (i < low.size() && low[i] == ':') return trim(std::string_view(text).substr(i + 1));
    }
    return text;
}

}  // namespace

std::optional<LiteralMatch> read_literal(std::string_view text, std::size_t pos) {
    Reader reader(text);
    std::size_t i = pos;
    auto v = reader.value(i);
    if (!v) return std::nullopt;
    return LiteralMatch{std::move(*v), pos, i};
}

std::string strip_code_fences(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text.substr(i, 3) == "```") {
            i += 3;
            std::size_t j = i;
            while (j < text.size() && std::isalnum(static_cast<unsigned char>(text[j]))) ++j;
            if (j > i && (j == text.size() || text[j] == '\n' || text[j] == '\r' || text[j] == ' ')) i = j;
            continue;
        }
        out.push_back(text[i]);
        ++i;
    }
    const auto first = out.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    return out.substr(first, out.find_last_not_of(" \t\r\n") - first + 1);
}

std::vector<std::string> parse_decomposition(std::string_view response) {
    const std::string text = strip_code_fences(response);
    for (std::size_t pos = text.find('['); pos != std::string::npos; pos = text.find('[', pos + 1)) {
        auto match = read_literal(text, pos);
        if (!match) continue;
        auto steps = string_list(match->value);
        if (!steps) continue;
        if (steps->size() != 3) {
            throw ParseError("decomposition must have exactly 3 steps, got " +
                                 std::to_string(steps->size()),
                             std::string(response));
        }
        for (const auto& s : *steps) {
            if (s.empty()) throw ParseError("decomposition contains an empty step", std::string(response));
        }
        return *steps;
    }
    throw ParseError("no python list of strings found in decomposition response", std::string(response));
}

std::string parse_description(std::string_view response) {
    std::string text = trim(strip_code_fences(response));
    text = strip_prefix(std::move(text));

    if (!text.empty()) {
        if (auto match = read_literal(text, 0)) {
            const auto* s = match->value.as_string();
            if (s != nullptr && trim(std::string_view(text).substr(match->end)).empty()) {
                text = trim(*s);
            }
        }
    }
    // Unbalanced or multi-line quoting: drop one matching outer pair.
    if (const QuoteKind* q = quote_at(text, 0)) {
        if (text.size() >= q->open.size() + q->close.size() &&
            std::string_view(text).substr(text.size() - q->close.size()) == q->close) {
            text = trim(std::string_view(text).substr(q->open.size(),
                                                      text.size() - q->open.size() - q->close.size()));
        }
    }
    if (text.empty()) throw ParseError("description response is empty", std::string(response));
    return text;
}

ContextInfo parse_context(std::string_view response) {
    const std::string text = strip_code_fences(response);
    Reader reader(text);

    auto validate = [&](ContextInfo info) {
        if (info.context.empty()) throw ParseError("context string is empty", std::string(response));
        if (info.objects.empty()) throw ParseError("objects list is empty", std::string(response));
        for (const auto& o : info.objects) {
            if (o.empty()) throw ParseError("objects list contains an empty entry", std::string(response));
        }
        return info;
    };

    for (std::size_t pos = text.find('{'); pos != std::string::npos; pos = text.find('{', pos + 1)) {
        std::size_t i = pos;
        auto v = reader.dict(i, true);
        if (!v) continue;
        if (auto info = context_from(*v)) return validate(std::move(*info));
    }
    // Brace-less form, as in the prompt's own example.
    for (std::size_t pos = 0; pos < text.size(); ++pos) {
        if (quote_at(text, pos) == nullptr) continue;
        std::size_t i = pos;
        auto v = reader.dict(i, false);
        if (!v) continue;
        if (auto info = context_from(*v)) return validate(std::move(*info));
    }
    throw ParseError("no dictionary with 'context' and 'objects' found", std::string(response));
}

}  // namespace zsar
