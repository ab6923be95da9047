#pragma once

#include <memory>
#include <string>
#include <vector>

#include "moevd/features.hpp"
#include "moevd/learn.hpp"
#include "moevd/rng.hpp"

namespace moevd::testing {

// Owns the rows that the examples point into.
struct Batch {
    std::size_t dim = 0;
    std::vector<std::vector<features::Entry>> rows;
    std::vector<learn::Example> examples;

    void add(std::vector<features::Entry> row, int target) {
        rows.push_back(std::move(row));
        targets.push_back(target);
    }
    // Call after the last add().
    void seal() {
        examples.clear();
        for (std::size_t i = 0; i < rows.size(); ++i) examples.push_back({{dim, rows[i]}, targets[i]});
    }

    std::vector<int> targets;
};

// Sparse random rows of `nnz` distinct coordinates with N(0,1) values.
inline Batch random_batch(std::uint64_t seed, std::size_t n, std::size_t dim, std::size_t nnz, std::size_t classes) {
    Rng rng(seed);
    Batch b;
    b.dim = dim;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<features::Entry> row;
        std::vector<std::uint32_t> idx;
        while (idx.size() < nnz) {
            auto c = static_cast<std::uint32_t>(rng.below(dim));
            bool seen = false;
            for (auto j : idx) seen = seen || j == c;
            if (!seen) idx.push_back(c);
        }
        std::sort(idx.begin(), idx.end());
        for (auto c : idx) row.push_back({c, rng.normal()});
        b.add(std::move(row), static_cast<int>(rng.below(classes < 2 ? 2 : classes)));
    }
    b.seal();
    return b;
}

// Gives every parameter a random value so gradients are non-trivial.
inline void randomize(learn::Model& m, std::uint64_t seed, double scale = 0.5) {
    Rng rng(seed);
    for (auto* v : {&m.w1, &m.b1, &m.w2, &m.b2})
        for (auto& x : *v) x = scale * rng.normal();
}

}  // namespace moevd::testing
