#include "zsar/bpe_tokenizer.hpp"

#include "zsar/errors.hpp"

#include <zlib.h>

#include <array>
#include <fstream>
#include <limits>
#include <locale.h>
#include <sstream>
#include <wctype.h>

namespace zsar {

namespace {

constexpr std::string_view kSot = "<|startoftext|>";
constexpr std::string_view kEot = "<|endoftext|>";
constexpr std::string_view kEndOfWord = "</w>";

/// Wide-character classification under a UTF-8 locale, independent of the
/// process-global locale.
class UnicodeClass {
public:
    UnicodeClass() {
        for (const char* name : {"C.UTF-8", "C.utf8", "en_US.UTF-8"}) {
            loc_ = newlocale(LC_CTYPE_MASK, name, static_cast<locale_t>(0));
            if (loc_ != static_cast<locale_t>(0)) break;
        }
    }
    ~UnicodeClass() {
        if (loc_ != static_cast<locale_t>(0)) freelocale(loc_);
    }
    UnicodeClass(const UnicodeClass&) = delete;
    UnicodeClass& operator=(const UnicodeClass&) = delete;

    bool letter(char32_t c) const {
        if (c < 0x80) return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
        return has_locale() && iswalpha_l(static_cast<wint_t>(c), loc_) != 0;
    }
    bool number(char32_t c) const {
        if (c < 0x80) return c >= '0' && c <= '9';
        // Superscript digits and vulgar fractions are \p{N} but not letters.
        return c == 0xB2 || c == 0xB3 || c == 0xB9 || (c >= 0xBC && c <= 0xBE);
    }
    bool space(char32_t c) const {
        if (c < 0x80) return c == ' ' || (c >= '\t' && c <= '\r') || (c >= 0x1C && c <= 0x1F);
        return c == 0x85 || c == 0xA0 || (has_locale() && iswspace_l(static_cast<wint_t>(c), loc_) != 0);
    }
    char32_t lower(char32_t c) const {
        if (c < 0x80) return (c >= 'A' && c <= 'Z') ? c + 32 : c;
        return has_locale() ? static_cast<char32_t>(towlower_l(static_cast<wint_t>(c), loc_)) : c;
    }

private:
    bool has_locale() const { return loc_ != static_cast<locale_t>(0); }
    locale_t loc_ = static_cast<locale_t>(0);
};

const UnicodeClass& unicode() {
    static const UnicodeClass instance;
    return instance;
}

std::vector<char32_t> decode_utf8(std::string_view s) {
    std::vector<char32_t> out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const auto b0 = static_cast<unsigned char>(s[i]);
        std::size_t len = 0;
        char32_t cp = 0;
        if (b0 < 0x80) {
            len = 1;
            cp = b0;
        } else if ((b0 & 0xE0) == 0xC0) {
            len = 2;
            cp = b0 & 0x1F;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3;
            cp = b0 & 0x0F;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4;
            cp = b0 & 0x07;
        } else {
            throw TokenizationError("invalid UTF-8 lead byte at offset " + std::to_string(i));
        }
        if (i + len > s.size()) throw TokenizationError("truncated UTF-8 sequence at offset " + std::to_string(i));
        for (std::size_t k = 1; k < len; ++k) {
            const auto b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xC0) != 0x80) {
                throw TokenizationError("invalid UTF-8 continuation byte at offset " + std::to_string(i + k));
            }
            cp = (cp << 6) | (b & 0x3F);
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

/// GPT-2 style reversible byte -> printable code point map, in the order the
/// vocabulary lists it: printable bytes first, remapped bytes after.
std::vector<std::pair<unsigned, char32_t>> byte_alphabet() {
    std::vector<std::pair<unsigned, char32_t>> out;
    std::array<bool, 256> printable{};
    auto add_range = [&](unsigned lo, unsigned hi) {
        for (unsigned b = lo; b <= hi; ++b) {
            printable[b] = true;
            out.emplace_back(b, static_cast<char32_t>(b));
        }
    };
    add_range('!', '~');
    add_range(0xA1, 0xAC);
    add_range(0xAE, 0xFF);
    char32_t next = 256;
    for (unsigned b = 0; b < 256; ++b) {
        if (!printable[b]) out.emplace_back(b, next++);
    }
    return out;
}

std::string read_maybe_gzip(const std::filesystem::path& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot open BPE merges file " + path.string());
    unsigned char magic[2] = {0, 0};
    probe.read(reinterpret_cast<char*>(magic), 2);
    const bool gz = probe.gcount() == 2 && magic[0] == 0x1F && magic[1] == 0x8B;
    if (!gz) {
        probe.clear();
        probe.seekg(0);
        std::stringstream ss;
        ss << probe.rdbuf();
        return ss.str();
    }
    probe.close();
    gzFile f = gzopen(path.c_str(), "rb");
    if (f == nullptr) throw IoError("cannot open gzip file " + path.string());
    std::string out;
    char buf[1 << 15];
    int n = 0;
    while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
    const bool failed = n < 0;
    gzclose(f);
    if (failed) throw FormatError("corrupt gzip stream in " + path.string());
    return out;
}

bool starts_with(const std::vector<char32_t>& cps, std::size_t i, std::string_view lit) {
    if (i + lit.size() > cps.size()) return false;
    for (std::size_t k = 0; k < lit.size(); ++k) {
        if (cps[i + k] != static_cast<char32_t>(static_cast<unsigned char>(lit[k]))) return false;
    }
    return true;
}

}  // namespace

BpeTokenizer::BpeTokenizer(std::vector<std::pair<std::string, std::string>> merges) {
    const auto alphabet = byte_alphabet();
    byte_symbols_.resize(256);
    std::vector<std::string> vocab;
    vocab.reserve(512 + merges.size() + 2);
    for (const auto& [byte, cp] : alphabet) {
        std::string sym;
        append_utf8(sym, cp);
        byte_symbols_[byte] = sym;
        vocab.push_back(sym);
    }
    for (std::size_t i = 0; i < 256; ++i) vocab.push_back(vocab[i] + std::string(kEndOfWord));
    for (std::size_t r = 0; r < merges.size(); ++r) {
        vocab.push_back(merges[r].first + merges[r].second);
        ranks_.emplace(merges[r].first + " " + merges[r].second, r);
    }
    vocab.emplace_back(kSot);
    vocab.emplace_back(kEot);
    // Duplicate strings keep the later id, matching dict(zip(vocab, range)).
    for (std::size_t id = 0; id < vocab.size(); ++id) encoder_.insert_or_assign(vocab[id], static_cast<int>(id));
    vocab_size_ = vocab.size();
    sot_ = encoder_.at(std::string(kSot));
    eot_ = encoder_.at(std::string(kEot));
}

BpeTokenizer BpeTokenizer::load(const std::filesystem::path& merges_file, std::size_t max_merges) {
    std::istringstream in(read_maybe_gzip(merges_file));
    std::vector<std::pair<std::string, std::string>> merges;
    std::string line;
    bool first = true;
    while (std::getline(in, line) && merges.size() < max_merges) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first && !line.empty() && line.front() == '#') {
            first = false;
            continue;
        }
        first = false;
        if (line.empty()) continue;
        const auto sp = line.find(' ');
        if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size() ||
            line.find(' ', sp + 1) != std::string::npos) {
            throw FormatError("malformed merge line '" + line + "' in " + merges_file.string());
        }
        merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    }
    if (merges.empty()) throw FormatError("no merges in " + merges_file.string());
    return BpeTokenizer(std::move(merges));
}

std::vector<std::string> BpeTokenizer::pre_tokenize(std::string_view text) {
    const UnicodeClass& uc = unicode();
    const auto raw = decode_utf8(text);

    // whitespace collapse, trim, lowercase
    std::vector<char32_t> cps;
    cps.reserve(raw.size());
    for (char32_t c : raw) {
        if (uc.space(c)) {
            if (!cps.empty() && cps.back() != U' ') cps.push_back(U' ');
        } else {
            cps.push_back(uc.lower(c));
        }
    }
    if (!cps.empty() && cps.back() == U' ') cps.pop_back();

    std::vector<std::string> out;
    auto emit = [&](std::size_t b, std::size_t e) {
        std::string s;
        for (std::size_t k = b; k < e; ++k) append_utf8(s, cps[k]);
        out.push_back(std::move(s));
    };
    static constexpr std::array<std::string_view, 7> kContractions{"'s", "'t", "'re", "'ve", "'m", "'ll", "'d"};

    std::size_t i = 0;
    while (i < cps.size()) {
        if (starts_with(cps, i, kSot)) {
            emit(i, i + kSot.size());
            i += kSot.size();
            continue;
        }
        if (starts_with(cps, i, kEot)) {
            emit(i, i + kEot.size());
            i += kEot.size();
            continue;
        }
        bool matched = false;
        for (auto c : kContractions) {
            if (starts_with(cps, i, c)) {
                emit(i, i + c.size());
                i += c.size();
                matched = true;
                break;
            }
        }
        if (matched) continue;

        const char32_t c = cps[i];
        std::size_t j = i + 1;
        if (uc.letter(c)) {
            while (j < cps.size() && uc.letter(cps[j])) ++j;
        } else if (uc.number(c)) {
            // a single numeric code point
        } else if (!uc.space(c)) {
            while (j < cps.size() && !uc.space(cps[j]) && !uc.letter(cps[j]) && !uc.number(cps[j])) ++j;
        } else {
            ++i;
            continue;
        }
        emit(i, j);
        i = j;
    }
    return out;
}

std::vector<std::string> BpeTokenizer::bpe(const std::string& token) const {
    // token is already mapped into byte symbols; split into code points
    std::vector<std::string> word;
    for (char32_t cp : decode_utf8(token)) {
        std::string s;
        append_utf8(s, cp);
        word.push_back(std::move(s));
    }
    if (word.empty()) return {};
    word.back() += kEndOfWord;

    while (word.size() > 1) {
        std::size_t best_rank = std::numeric_limits<std::size_t>::max();
        std::size_t best_at = 0;
        for (std::size_t k = 0; k + 1 < word.size(); ++k) {
            auto it = ranks_.find(word[k] + " " + word[k + 1]);
            if (it != ranks_.end() && it->second < best_rank) {
                best_rank = it->second;
                best_at = k;
            }
        }
        if (best_rank == std::numeric_limits<std::size_t>::max()) break;
        const std::string first = word[best_at];
        const std::string second = word[best_at + 1];

        std::vector<std::string> merged;
        merged.reserve(word.size());
        for (std::size_t k = 0; k < word.size();) {
            if (k + 1 < word.size() && word[k] == first && word[k + 1] == second) {
                merged.push_back(first + second);
                k += 2;
            } else {
                merged.push_back(word[k]);
                ++k;
            }
        }
        word = std::move(merged);
    }
    return word;
}

std::vector<int> BpeTokenizer::encode(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& tok : pre_tokenize(text)) {
        if (tok == kSot || tok == kEot) {
            ids.push_back(tok == kSot ? sot_ : eot_);
            continue;
        }
        std::string mapped;
        for (unsigned char b : tok) mapped += byte_symbols_[b];
        for (const auto& piece : bpe(mapped)) {
            auto it = encoder_.find(piece);
            if (it == encoder_.end()) throw TokenizationError("BPE piece '" + piece + "' missing from vocabulary");
            ids.push_back(it->second);
        }
    }
    return ids;
}

TokenizedText BpeTokenizer::tokenize(std::string_view text, std::size_t context_length) const {
    if (context_length < 2) throw DomainError("context length must be >= 2");
    TokenizedText out;
    out.ids.reserve(context_length);
    out.ids.push_back(sot_);
    const auto body = encode(text);
    out.ids.insert(out.ids.end(), body.begin(), body.end());
    out.ids.push_back(eot_);
    if (out.ids.size() > context_length) {
        out.ids.resize(context_length);
        out.ids.back() = eot_;
        out.truncated = true;
    }
    out.eot_position = out.ids.size() - 1;
    out.ids.resize(context_length, 0);
    return out;
}

}  // namespace zsar
