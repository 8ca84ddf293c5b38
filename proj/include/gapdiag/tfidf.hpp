#pragma once

// TF-IDF features for question texts: lowercase, unicode-whitespace
// tokenization, unigrams + bigrams, smoothed idf, L2-normalized rows.

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "gapdiag/linalg.hpp"

namespace gapdiag {

namespace detail {

// Decodes one UTF-8 code point starting at s[i]; advances i. Invalid bytes are
// returned as themselves.
inline char32_t next_code_point(std::string_view s, std::size_t& i) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = c >= 0xF0 ? 4 : c >= 0xE0 ? 3 : c >= 0xC0 ? 2 : 1;
    if (i + len > s.size()) len = 1;
    char32_t cp = len == 1 ? c : len == 2 ? (c & 0x1F) : len == 3 ? (c & 0x0F) : (c & 0x07);
    for (std::size_t k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    i += len;
    return cp;
}

inline bool is_unicode_space(char32_t c) {
    return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 || (c >= 0x2000 && c <= 0x200A) ||
           c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

}  // namespace detail

// Lowercasing covers ASCII only; other scripts pass through unchanged.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    std::size_t i = 0;
    while (i < text.size()) {
        const std::size_t start = i;
        const char32_t cp = detail::next_code_point(text, i);
        if (detail::is_unicode_space(cp)) {
            if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
            continue;
        }
        for (std::size_t k = start; k < i && k < text.size(); ++k) {
            char ch = text[k];
            if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline std::vector<std::string> ngrams_1_2(const std::vector<std::string>& toks) {
    std::vector<std::string> out = toks;
    for (std::size_t i = 0; i + 1 < toks.size(); ++i) out.push_back(toks[i] + " " + toks[i + 1]);
    return out;
}

class TfidfVectorizer {
public:
    void fit(const std::vector<std::string>& docs) {
        vocab_.clear();
        std::map<std::string, int> df;
        for (const auto& d : docs) {
            const auto grams = ngrams_1_2(tokenize(d));
            for (const auto& g : std::set<std::string>(grams.begin(), grams.end())) df[g]++;
        }
        const double n = static_cast<double>(docs.size());
        idf_.clear();
        for (const auto& [term, count] : df) {
            vocab_.emplace(term, static_cast<int>(idf_.size()));
            idf_.push_back(std::log((1.0 + n) / (1.0 + count)) + 1.0);
        }
    }

    Mat transform(const std::vector<std::string>& docs) const {
        Mat X = Mat::Zero(static_cast<Eigen::Index>(docs.size()), static_cast<Eigen::Index>(std::max<std::size_t>(idf_.size(), 1)));
        for (std::size_t r = 0; r < docs.size(); ++r) {
            for (const auto& g : ngrams_1_2(tokenize(docs[r]))) {
                if (auto it = vocab_.find(g); it != vocab_.end()) X(static_cast<Eigen::Index>(r), it->second) += 1.0;
            }
            for (std::size_t c = 0; c < idf_.size(); ++c) X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) *= idf_[c];
            const double norm = X.row(static_cast<Eigen::Index>(r)).norm();
            if (norm > 0) X.row(static_cast<Eigen::Index>(r)) /= norm;
        }
        return X;
    }

    std::size_t vocabulary_size() const { return idf_.size(); }

private:
    std::map<std::string, int> vocab_;
    std::vector<double> idf_;
};

}  // namespace gapdiag
