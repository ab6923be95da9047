#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace moevd::features {

/// XXH64 of `data`.
std::uint64_t xxhash64(std::string_view data, std::uint64_t seed) noexcept;

inline constexpr std::uint64_t kDefaultHashSeed = 0x5EEDC0DE2024ULL;
inline constexpr std::size_t kDefaultDim = std::size_t{1} << 18;
inline constexpr int kDefaultNMax = 2;

using TokenStream = std::vector<std::string>;

/// Code-aware lexer. Comments are dropped, literals collapse to NUM/STR/CHAR,
/// identifiers are followed by their lower-cased subword pieces when they
/// split into more than one. Total over arbitrary bytes.
TokenStream tokenize(std::string_view code);

/// Splits an identifier on underscores and case boundaries; pieces lower-cased.
std::vector<std::string> subword_pieces(std::string_view identifier);

struct Entry {
    std::uint32_t index;
    double weight;
};

/// A sparse row handed to the classifier core. Entries sorted by index.
struct SparseRow {
    std::size_t dim = 0;
    std::span<const Entry> entries;
};

/// Hashed n-gram vector. Indices strictly increasing and < dim; unit L2 norm
/// unless empty.
struct FeatureVector {
    std::size_t dim = 0;
    std::vector<Entry> entries;

    SparseRow row() const { return {dim, entries}; }
    double norm() const;
};

/// Index of an n-gram: xxhash64 of the tokens joined by U+001F, mod dim.
std::uint32_t gram_index(std::span<const std::string> gram, std::size_t dim, std::uint64_t hash_seed);

/// Counts every n-gram of length 1..n_max per hashed index, damps counts with
/// 1 + ln(c), then L2-normalizes. `dim` must be a power of two.
FeatureVector featurize(std::span<const std::string> tokens, std::size_t dim = kDefaultDim, int n_max = kDefaultNMax,
                        std::uint64_t hash_seed = kDefaultHashSeed);

struct EncoderConfig {
    std::string encoder = "hashed-ngram";
    std::size_t dim = kDefaultDim;
    int n_max = kDefaultNMax;
    std::uint64_t hash_seed = kDefaultHashSeed;

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Turns source text into a feature vector. The classifier core only sees
/// this interface.
class Encoder {
public:
    virtual ~Encoder() = default;
    virtual FeatureVector encode(std::string_view code) const = 0;
    virtual std::size_t dim() const = 0;
    virtual EncoderConfig config() const = 0;
};

class HashedNgramEncoder final : public Encoder {
public:
    explicit HashedNgramEncoder(EncoderConfig cfg = {});
    FeatureVector encode(std::string_view code) const override;
    std::size_t dim() const override { return cfg_.dim; }
    EncoderConfig config() const override { return cfg_; }

private:
    EncoderConfig cfg_;
};

}  // namespace moevd::features
