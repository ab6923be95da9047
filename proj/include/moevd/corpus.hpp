#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "moevd/cwe_taxonomy.hpp"

namespace moevd::corpus {

using taxonomy::CategoryId;
using taxonomy::CategoryMap;
using taxonomy::CweId;

enum class Label { non_vulnerable = 0, vulnerable = 1 };

struct CodeSample {
    std::string sample_id;
    std::string code;
    Label label = Label::non_vulnerable;
    std::optional<CweId> cwe;
    std::optional<std::string> project;

    bool vulnerable() const noexcept { return label == Label::vulnerable; }
};

using SampleStore = std::shared_ptr<const std::vector<CodeSample>>;

/// Parses the JSON-lines dataset. Throws ParseError (with line number) for a
/// missing or mistyped field and IngestionError for a duplicate id.
std::vector<CodeSample> ingest(std::string_view source);

/// Serializes one sample back to its dataset line (no trailing newline).
std::string to_jsonl(const CodeSample& s);

struct SplitRatios {
    double train = 0.8;
    double valid = 0.1;
    double test = 0.1;
};

/// Train/valid/test partition held as index lists over a shared store.
struct SplitCorpus {
    SampleStore store;
    std::vector<std::size_t> train;
    std::vector<std::size_t> valid;
    std::vector<std::size_t> test;
    std::uint64_t seed = 0;

    const CodeSample& at(std::size_t index) const { return (*store)[index]; }

    /// {train:[ids], valid:[ids], test:[ids]}; also the split-override format.
    std::string manifest_json() const;
};

/// Seeded uniform shuffle then a contiguous cut at the given ratios.
SplitCorpus split(SampleStore samples, std::uint64_t seed, SplitRatios ratios = {});

/// Membership taken verbatim from a split-override file. Every sample must be
/// listed exactly once.
SplitCorpus split_from_manifest(SampleStore samples, std::string_view manifest_json);

enum class NegativeMode { all_negatives, nonvuln_only_negatives };

std::string to_string(NegativeMode mode);
NegativeMode parse_negative_mode(std::string_view text);

struct LabeledIndex {
    std::size_t index;  // into the store
    int target;         // 0/1 for experts, roster position for the router
};

struct ExpertView {
    CategoryId category;
    NegativeMode mode = NegativeMode::all_negatives;
    std::vector<LabeledIndex> samples;
    std::size_t positives = 0;
    std::size_t unannotated_vulnerable = 0;  // vulnerable without a CWE: never positive
};

/// Relabels `indices` for one category. Throws TrainingDataError when the
/// category has no positive.
ExpertView expert_view(const SplitCorpus& split, std::span<const std::size_t> indices, const CategoryMap& map,
                       const CategoryId& category, NegativeMode mode, std::uint64_t shuffle_seed);

/// Expert view over the training split.
ExpertView expert_view(const SplitCorpus& split, const CategoryMap& map, const CategoryId& category,
                       NegativeMode mode, std::uint64_t shuffle_seed);

struct RouterView {
    std::vector<LabeledIndex> samples;
    std::vector<CategoryId> roster;
    std::vector<double> class_weights;  // aligned with roster, 1 / class fraction
    std::size_t unannotated_vulnerable = 0;
};

/// Vulnerable, annotated training samples labelled with their roster position.
/// Throws TrainingDataError when a roster category has no sample.
RouterView router_view(const SplitCorpus& split, const CategoryMap& map, std::uint64_t shuffle_seed = 0);

struct HeadTailPartition {
    std::set<CweId> head;
    std::set<CweId> tail;
    double head_fraction = 0.0;
    std::vector<std::pair<CweId, std::size_t>> ranked;  // descending frequency, ties by id
};

/// Minimal prefix of CWE ids (by descending vulnerable frequency) reaching
/// half of the annotated vulnerable samples.
HeadTailPartition head_tail(std::span<const CodeSample> samples);
HeadTailPartition head_tail(const std::map<CweId, std::size_t>& counts);

inline constexpr std::string_view kSmallGroupLabel = "CWE-N<=10";

struct CweEvalGroup {
    std::map<std::string, std::set<CweId>> groups;
    std::string small_group_label = std::string(kSmallGroupLabel);
};

/// Raw CWE ids with fewer than 10 vulnerable samples pool into one group.
CweEvalGroup eval_groups(std::span<const CodeSample> test);

/// Vulnerable-sample counts per CWE id over the given indices.
std::map<CweId, std::size_t> vulnerable_counts(const SplitCorpus& split, std::span<const std::size_t> indices);

/// Materializes a list of samples by index.
std::vector<CodeSample> gather(const SplitCorpus& split, std::span<const std::size_t> indices);

}  // namespace moevd::corpus
