#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace zsar {

/// Value produced by the Python-literal reader: a string, a list, or a dict
/// with string keys. Numbers and other atoms are not representable and make
/// the enclosing literal ill-formed.
struct PyValue {
    using List = std::vector<PyValue>;
    using Dict = std::vector<std::pair<std::string, PyValue>>;
    std::variant<std::string, List, Dict> value;

    const std::string* as_string() const { return std::get_if<std::string>(&value); }
    const List* as_list() const { return std::get_if<List>(&value); }
    const Dict* as_dict() const { return std::get_if<Dict>(&value); }
};

struct LiteralMatch {
    PyValue value;
    std::size_t begin = 0;
    std::size_t end = 0;  ///< one past the closing delimiter
};

/// Reads one literal starting exactly at `pos`. Accepts single, double and
/// typographic quotes, backslash escapes and trailing commas.
std::optional<LiteralMatch> read_literal(std::string_view text, std::size_t pos);

/// Removes markdown code fences (``` with optional language tag) and
/// surrounding whitespace.
std::string strip_code_fences(std::string_view text);

struct ContextInfo {
    std::string context;
    std::vector<std::string> objects;

    friend bool operator==(const ContextInfo&, const ContextInfo&) = default;
};

// Response parsers. All are pure and throw ParseError (carrying the raw
// text) when the response cannot be turned into the expected structure.

/// First well-formed list of strings; must have exactly three non-empty steps.
std::vector<std::string> parse_decomposition(std::string_view response);

/// Fences, "Description:"/"Answer:" prefixes and surrounding quotes removed.
std::string parse_description(std::string_view response);

/// First dict with `context` and a non-empty `objects` list. A brace-less
/// `'context': ..., 'objects': [...]` fragment is accepted as well.
ContextInfo parse_context(std::string_view response);

}  // namespace zsar
