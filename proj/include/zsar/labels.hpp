#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace zsar {

/// Turns a dataset-native label ("ApplyEyeMakeup", "Playing_Daf",
/// "brush_hair") into a lowercase phrase. Camel-case boundaries,
/// underscores and whitespace runs become single spaces. Idempotent.
std::string normalize_label(std::string_view raw_id);

struct ActionClass {
    std::string raw_id;
    std::string display;
    std::size_t index = 0;  ///< position in the owning label space

    static ActionClass from_raw(std::string raw_id, std::size_t index = 0);

    friend bool operator==(const ActionClass&, const ActionClass&) = default;
};

/// Ordered set of action classes.
class LabelSpace {
public:
    LabelSpace() = default;
    explicit LabelSpace(const std::vector<std::string>& raw_ids);

    std::size_t size() const noexcept { return classes_.size(); }
    bool empty() const noexcept { return classes_.empty(); }
    const ActionClass& operator[](std::size_t i) const { return classes_.at(i); }
    const std::vector<ActionClass>& classes() const noexcept { return classes_; }
    auto begin() const noexcept { return classes_.begin(); }
    auto end() const noexcept { return classes_.end(); }

    /// Lookup by raw id or by normalized display form.
    std::optional<std::size_t> find(std::string_view id) const;

    /// One raw id per line, index order; blank lines and `#` comments skipped.
    /// Lines of the form "<n> <raw_id>" (UCF101 classInd.txt) are accepted too.
    static LabelSpace load(const std::filesystem::path& classes_file);

private:
    std::vector<ActionClass> classes_;
};

}  // namespace zsar
