#pragma once
// Small string helpers shared across modules. ASCII case folding only:
// entity keys and metric normalization treat bytes >= 0x80 as opaque.

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace kgforge {

inline bool is_space(char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
}

inline char to_lower(char c) {
    return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

inline std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), to_lower);
    return out;
}

// Trim plus collapse of internal whitespace runs to a single space.
inline std::string collapse_ws(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending = false;
    for (char c : s) {
        if (is_space(c)) {
            pending = !out.empty();
        } else {
            if (pending) out.push_back(' ');
            pending = false;
            out.push_back(c);
        }
    }
    return out;
}

// Canonical key for entity / triplet-field comparison: case-insensitive,
// whitespace-collapsed.
inline std::string norm_key(std::string_view s) {
    return lower(collapse_ws(s));
}

inline bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (size_t i = 0; i < prefix.size(); ++i) {
        if (to_lower(s[i]) != to_lower(prefix[i])) return false;
    }
    return true;
}

inline bool contains(std::string_view s, std::string_view needle) {
    return s.find(needle) != std::string_view::npos;
}

inline std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    size_t start = 0;
    while (start <= text.size()) {
        size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.emplace_back(text.substr(start));
            break;
        }
        std::string_view line = text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.emplace_back(line);
        start = nl + 1;
    }
    return lines;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

// BM25 / term-overlap tokenization: lowercase runs of alphanumerics, split on
// everything else, empties dropped.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(to_lower(c));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

// SQuAD-style answer normalization: lowercase, delete ASCII punctuation,
// remove the articles a/an/the, collapse whitespace.
inline std::string normalize_answer(std::string_view s) {
    std::string lowered;
    lowered.reserve(s.size());
    for (char c : s) {
        unsigned char u = static_cast<unsigned char>(c);
        if (u < 0x80 && std::ispunct(u)) continue;
        lowered.push_back(to_lower(c));
    }
    std::vector<std::string> kept;
    size_t i = 0;
    while (i < lowered.size()) {
        while (i < lowered.size() && is_space(lowered[i])) ++i;
        size_t j = i;
        while (j < lowered.size() && !is_space(lowered[j])) ++j;
        if (j > i) {
            std::string word = lowered.substr(i, j - i);
            if (word != "a" && word != "an" && word != "the") kept.push_back(std::move(word));
        }
        i = j;
    }
    return join(kept, " ");
}

}  // namespace kgforge
