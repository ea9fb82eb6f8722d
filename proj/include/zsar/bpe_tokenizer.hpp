#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace zsar {

struct TokenizedText {
    std::vector<int> ids;          ///< exactly context_length entries, zero padded
    std::size_t eot_position = 0;  ///< index of the end-of-text token
    bool truncated = false;
};

/// Byte-level BPE tokenizer compatible with the CLIP vocabulary layout:
/// 256 byte symbols, the same with an end-of-word marker, one entry per
/// merge, then <|startoftext|> and <|endoftext|>.
class BpeTokenizer {
public:
    /// Upper bound on merges read from a merges file (CLIP's vocabulary size
    /// minus byte symbols and the two specials).
    static constexpr std::size_t kMaxMerges = 49152 - 256 - 2;

    explicit BpeTokenizer(std::vector<std::pair<std::string, std::string>> merges);

    /// Merges file: optional leading "#version" line, then "left right" per
    /// line. Gzip-compressed files are detected by their magic bytes.
    static BpeTokenizer load(const std::filesystem::path& merges_file, std::size_t max_merges = kMaxMerges);

    /// BPE ids for `text` without start/end tokens. Throws TokenizationError
    /// on invalid UTF-8.
    std::vector<int> encode(std::string_view text) const;

    /// [sot] + encode(text) + [eot], truncated to `context_length` with the
    /// last slot forced to eot.
    TokenizedText tokenize(std::string_view text, std::size_t context_length = 77) const;

    int sot() const noexcept { return sot_; }
    int eot() const noexcept { return eot_; }
    std::size_t vocab_size() const noexcept { return vocab_size_; }

    /// Lowercased, whitespace-collapsed text split into pre-tokens the way
    /// CLIP's regular expression does.
    static std::vector<std::string> pre_tokenize(std::string_view text);

private:
    std::vector<std::string> bpe(const std::string& token) const;

    std::unordered_map<std::string, int> encoder_;
    std::unordered_map<std::string, std::size_t> ranks_;  ///< "left right" -> rank
    std::vector<std::string> byte_symbols_;                ///< byte -> UTF-8 symbol
    std::size_t vocab_size_ = 0;
    int sot_ = 0;
    int eot_ = 0;
};

}  // namespace zsar
