#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace structkit {

enum class TokenizerMode { unicode_words, bytes_div4 };

inline std::string_view tokenizer_mode_name(TokenizerMode m) {
    return m == TokenizerMode::unicode_words ? "unicode_words" : "bytes_div4";
}

inline TokenizerMode tokenizer_mode_from_name(std::string_view name) {
    if (name == "bytes_div4") return TokenizerMode::bytes_div4;
    return TokenizerMode::unicode_words;
}

namespace utf8 {

// Decodes one codepoint starting at i, advancing i. Invalid bytes decode as
// themselves (latin-1 style) so no input can fail.
inline char32_t decode(std::string_view s, std::size_t& i) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    if (c < 0x80) { ++i; return c; }
    std::size_t len = 0;
    char32_t cp = 0;
    if ((c & 0xE0) == 0xC0) { len = 2; cp = c & 0x1F; }
    else if ((c & 0xF0) == 0xE0) { len = 3; cp = c & 0x0F; }
    else if ((c & 0xF8) == 0xF0) { len = 4; cp = c & 0x07; }
    else { ++i; return c; }
    if (i + len > s.size()) { ++i; return c; }
    for (std::size_t k = 1; k < len; ++k) {
        const unsigned char cc = static_cast<unsigned char>(s[i + k]);
        if ((cc & 0xC0) != 0x80) { ++i; return c; }
        cp = (cp << 6) | (cc & 0x3F);
    }
    i += len;
    return cp;
}

inline void encode(char32_t cp, std::string& out) {
    if (cp < 0x80) { out.push_back(static_cast<char>(cp)); }
    else if (cp < 0x800) {
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

}  // namespace utf8

// CJK unified ideographs, kana, and extensions: segmented per codepoint.
inline bool is_cjk(char32_t cp) {
    return (cp >= 0x3040 && cp <= 0x30FF) ||   // hiragana, katakana
           (cp >= 0x3400 && cp <= 0x4DBF) ||
           (cp >= 0x4E00 && cp <= 0x9FFF) ||
           (cp >= 0xF900 && cp <= 0xFAFF) ||
           (cp >= 0xFF66 && cp <= 0xFF9D) ||   // halfwidth kana
           (cp >= 0x20000 && cp <= 0x2FA1F);
}

inline bool is_word_char(char32_t cp) {
    if (cp < 0x80) {
        return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') ||
               (cp >= 'A' && cp <= 'Z') || cp == '_';
    }
    if (is_cjk(cp)) return false;  // handled per codepoint
    // Non-ASCII, non-CJK: treat general punctuation/space blocks as breaks,
    // everything else (accented letters, Cyrillic, Greek, ...) as word chars.
    if (cp >= 0x2000 && cp <= 0x206F) return false;
    if (cp >= 0x3000 && cp <= 0x303F) return false;
    if (cp == 0x00A0 || cp == 0xFEFF) return false;
    if (cp >= 0xFF01 && cp <= 0xFF20) return false;  // fullwidth punctuation span
    return true;
}

inline char32_t ascii_lower(char32_t cp) {
    return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
}

// Deterministic word segmentation: maximal runs of word characters; CJK
// codepoints are emitted as single-codepoint tokens.
inline std::vector<std::string> segment_words(std::string_view text, bool lowercase = false) {
    std::vector<std::string> tokens;
    std::string cur;
    std::size_t i = 0;
    while (i < text.size()) {
        char32_t cp = utf8::decode(text, i);
        if (lowercase) cp = ascii_lower(cp);
        if (is_cjk(cp)) {
            if (!cur.empty()) { tokens.push_back(std::move(cur)); cur.clear(); }
            std::string one;
            utf8::encode(cp, one);
            tokens.push_back(std::move(one));
        } else if (is_word_char(cp)) {
            utf8::encode(cp, cur);
        } else {
            if (!cur.empty()) { tokens.push_back(std::move(cur)); cur.clear(); }
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

inline std::size_t count_tokens(std::string_view text, TokenizerMode mode) {
    if (mode == TokenizerMode::bytes_div4) return (text.size() + 3) / 4;
    std::size_t n = 0;
    bool in_word = false;
    std::size_t i = 0;
    while (i < text.size()) {
        const char32_t cp = utf8::decode(text, i);
        if (is_cjk(cp)) { ++n; in_word = false; }
        else if (is_word_char(cp)) { if (!in_word) { ++n; in_word = true; } }
        else in_word = false;
    }
    return n;
}

enum class LanguageMode { standard, cjk };

// Metric tokenization: lowercase, punctuation stripped. CJK codepoints
// always segment individually, which covers both modes.
inline std::vector<std::string> normalize_tokens(std::string_view text,
                                                 LanguageMode = LanguageMode::standard) {
    return segment_words(text, /*lowercase=*/true);
}

using TokenBag = std::map<std::string, std::size_t>;

inline TokenBag token_bag(const std::vector<std::string>& tokens) {
    TokenBag bag;
    for (const auto& t : tokens) ++bag[t];
    return bag;
}

inline std::size_t bag_overlap(const TokenBag& a, const TokenBag& b) {
    std::size_t n = 0;
    for (const auto& [tok, cnt] : a) {
        auto it = b.find(tok);
        if (it != b.end()) n += std::min(cnt, it->second);
    }
    return n;
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
    return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == '\n') {
            lines.emplace_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    if (!s.empty() && s.back() == '\n') lines.pop_back();
    return lines;
}

inline bool is_blank_line(std::string_view line) {
    return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

// Canonical form applied before segmentation: drop BOM, CRLF -> LF,
// blank-line runs longer than two collapsed to two empty lines.
inline std::string normalize_body(std::string_view body) {
    std::string s;
    s.reserve(body.size());
    std::size_t i = 0;
    if (body.size() >= 3 && body.substr(0, 3) == "\xEF\xBB\xBF") i = 3;
    for (; i < body.size(); ++i) {
        if (body[i] == '\r' && i + 1 < body.size() && body[i + 1] == '\n') continue;
        s.push_back(body[i]);
    }
    const bool trailing_nl = !s.empty() && s.back() == '\n';
    auto lines = split_lines(s);
    std::string out;
    std::size_t blanks = 0;
    std::vector<std::string> kept;
    for (auto& line : lines) {
        if (is_blank_line(line)) {
            ++blanks;
            if (blanks <= 2) kept.emplace_back("");
        } else {
            blanks = 0;
            kept.push_back(std::move(line));
        }
    }
    for (std::size_t k = 0; k < kept.size(); ++k) {
        out += kept[k];
        if (k + 1 < kept.size()) out += '\n';
    }
    if (trailing_nl) out += '\n';
    return out;
}

// FNV-1a 64-bit, used for prompt fixtures and manifest hashes.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string fnv1a_hex(std::string_view s) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t h = fnv1a(s);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return out;
}

}  // namespace structkit
