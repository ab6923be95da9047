#include "moevd/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "moevd/error.hpp"

namespace moevd::features {

namespace {

bool is_ident_start(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }
bool is_ident_char(unsigned char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_upper(unsigned char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(unsigned char c) { return c >= 'a' && c <= 'z'; }
bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

constexpr std::array<std::string_view, 3> kOps3 = {">>=", "<<=", "..."};
constexpr std::array<std::string_view, 21> kOps2 = {"->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||",
                                                   "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "::", "##"};

// Skips a quoted literal starting at the opening quote; stops at the closing
// quote, an unescaped newline, or end of input.
std::size_t skip_quoted(std::string_view s, std::size_t i) {
    const char quote = s[i++];
    while (i < s.size()) {
        char c = s[i];
        if (c == '\\' && i + 1 < s.size()) {
            i += 2;
            continue;
        }
        if (c == '\n') return i;
        ++i;
        if (c == quote) return i;
    }
    return i;
}

}  // namespace

std::vector<std::string> subword_pieces(std::string_view ident) {
    std::vector<std::string> pieces;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) pieces.push_back(std::move(cur));
        cur.clear();
    };
    for (std::size_t i = 0; i < ident.size(); ++i) {
        const auto c = static_cast<unsigned char>(ident[i]);
        if (c == '_') {
            flush();
            continue;
        }
        if (is_upper(c) && !cur.empty()) {
            const auto prev = static_cast<unsigned char>(ident[i - 1]);
            const bool next_lower = i + 1 < ident.size() && is_lower(static_cast<unsigned char>(ident[i + 1]));
            if (is_lower(prev) || is_digit(prev) || (is_upper(prev) && next_lower)) flush();
        }
        cur.push_back(static_cast<char>(is_upper(c) ? c - 'A' + 'a' : c));
    }
    flush();
    return pieces;
}

TokenStream tokenize(std::string_view s) {
    TokenStream out;
    std::size_t i = 0;
    const std::size_t n = s.size();
    while (i < n) {
        const auto c = static_cast<unsigned char>(s[i]);
        if (is_space(c)) {
            ++i;
            continue;
        }
        if (c == '/' && i + 1 < n && s[i + 1] == '/') {
            while (i < n && s[i] != '\n') ++i;
            continue;
        }
        if (c == '/' && i + 1 < n && s[i + 1] == '*') {
            auto close = s.find("*/", i + 2);
            i = close == std::string_view::npos ? n : close + 2;
            continue;
        }
        if (is_ident_start(c)) {
            std::size_t j = i;
            while (j < n && is_ident_char(static_cast<unsigned char>(s[j]))) ++j;
            std::string_view ident = s.substr(i, j - i);
            if (j < n && (s[j] == '"' || s[j] == '\'') &&
                (ident == "L" || ident == "u" || ident == "U" || ident == "u8")) {
                out.emplace_back(s[j] == '"' ? "STR" : "CHAR");
                i = skip_quoted(s, j);
                continue;
            }
            out.emplace_back(ident);
            auto pieces = subword_pieces(ident);
            if (pieces.size() > 1)
                for (auto& p : pieces) out.push_back(std::move(p));
            i = j;
            continue;
        }
        if (is_digit(c) || (c == '.' && i + 1 < n && is_digit(static_cast<unsigned char>(s[i + 1])))) {
            std::size_t j = i + 1;
            while (j < n) {
                const auto d = static_cast<unsigned char>(s[j]);
                const auto prev = static_cast<unsigned char>(s[j - 1]);
                if (is_ident_char(d) || d == '.' || d == '\'') {
                    ++j;
                } else if ((d == '+' || d == '-') &&
                           (prev == 'e' || prev == 'E' || prev == 'p' || prev == 'P')) {
                    ++j;
                } else {
                    break;
                }
            }
            out.emplace_back("NUM");
            i = j;
            continue;
        }
        if (c == '"' || c == '\'') {
            out.emplace_back(c == '"' ? "STR" : "CHAR");
            i = skip_quoted(s, i);
            continue;
        }
        std::string_view rest = s.substr(i);
        bool matched = false;
        for (auto op : kOps3)
            if (rest.starts_with(op)) {
                out.emplace_back(op);
                i += 3;
                matched = true;
                break;
            }
        if (matched) continue;
        for (auto op : kOps2)
            if (rest.starts_with(op)) {
                out.emplace_back(op);
                i += 2;
                matched = true;
                break;
            }
        if (matched) continue;
        out.emplace_back(1, static_cast<char>(c));
        ++i;
    }
    return out;
}

double FeatureVector::norm() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.weight * e.weight;
    return std::sqrt(s);
}

std::uint32_t gram_index(std::span<const std::string> gram, std::size_t dim, std::uint64_t hash_seed) {
    std::string joined;
    for (std::size_t i = 0; i < gram.size(); ++i) {
        if (i) joined.push_back('\x1f');
        joined += gram[i];
    }
    return static_cast<std::uint32_t>(xxhash64(joined, hash_seed) & (dim - 1));
}

FeatureVector featurize(std::span<const std::string> tokens, std::size_t dim, int n_max, std::uint64_t hash_seed) {
    if (dim == 0 || (dim & (dim - 1)) != 0 || dim > (std::size_t{1} << 32))
        throw ConfigError("featurize: dim must be a power of two <= 2^32");
    if (n_max < 1) throw ConfigError("featurize: n_max must be >= 1");

    std::vector<std::uint32_t> hits;
    for (int len = 1; len <= n_max; ++len) {
        const auto L = static_cast<std::size_t>(len);
        for (std::size_t i = 0; i + L <= tokens.size(); ++i) hits.push_back(gram_index(tokens.subspan(i, L), dim, hash_seed));
    }
    std::sort(hits.begin(), hits.end());

    FeatureVector fv;
    fv.dim = dim;
    double sq = 0.0;
    for (std::size_t i = 0; i < hits.size();) {
        std::size_t j = i;
        while (j < hits.size() && hits[j] == hits[i]) ++j;
        const double w = 1.0 + std::log(static_cast<double>(j - i));
        fv.entries.push_back({hits[i], w});
        sq += w * w;
        i = j;
    }
    if (sq > 0.0) {
        const double inv = 1.0 / std::sqrt(sq);
        for (auto& e : fv.entries) e.weight *= inv;
    }
    return fv;
}

HashedNgramEncoder::HashedNgramEncoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.encoder != "hashed-ngram") throw ConfigError("unsupported encoder '" + cfg_.encoder + "'");
    if (cfg_.dim == 0 || (cfg_.dim & (cfg_.dim - 1)) != 0) throw ConfigError("encoder dim must be a power of two");
    if (cfg_.n_max < 1 || cfg_.n_max > 3) throw ConfigError("encoder n_max must be in 1..3");
}

FeatureVector HashedNgramEncoder::encode(std::string_view code) const {
    auto tokens = tokenize(code);
    return featurize(tokens, cfg_.dim, cfg_.n_max, cfg_.hash_seed);
}

}  // namespace moevd::features
