#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "moevd/corpus.hpp"

namespace moevd::fixtures {

/// One code "domain": a vocabulary of identifiers plus the CWE ids whose
/// vulnerable samples are written in it.
struct DomainSpec {
    std::string name;
    std::vector<std::string> cwes;  // first entry is drawn most often
    std::size_t vulnerable = 0;
    std::size_t clean = 0;
    std::size_t marker = 0;  // index into FixtureSpec::markers
    std::size_t neighbor = 0;  // domain whose vocabulary leaks in
};

struct FixtureSpec {
    std::string name;
    std::uint64_t seed = 1;
    std::vector<DomainSpec> domains;
    std::vector<std::pair<std::string, std::string>> edges;  // taxonomy, parent -> child
    std::vector<std::string> markers;  // vulnerable call patterns
    std::size_t min_instances = 30;
    std::size_t vocab_size = 14;       // identifiers per domain
    double own_vocab = 1.0;            // probability an identifier comes from the own pool
    double benign_marker = 1.0;        // probability a clean sample uses another domain's marker
    double extra_marker = 0.3;         // probability a vulnerable sample also uses another marker
    std::size_t min_statements = 6;
    std::size_t max_statements = 12;
};

struct Fixture {
    std::string name;
    std::vector<corpus::CodeSample> samples;
    std::string taxonomy;  // edge-list file content
    std::size_t min_instances = 30;

    std::string jsonl() const;
};

Fixture generate(const FixtureSpec& spec);

/// 12 categories (10 roots, CWE-noinfo, CWE-agg of three small roots), one
/// vocabulary per domain with no overlap.
FixtureSpec separable12_spec();

/// 4 categories whose vocabularies overlap pairwise.
FixtureSpec confusable4_spec();

}  // namespace moevd::fixtures
