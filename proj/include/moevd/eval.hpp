#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "moevd/corpus.hpp"
#include "moevd/moe.hpp"

namespace moevd::eval {

using taxonomy::CategoryId;
using taxonomy::CweId;

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::size_t total() const noexcept { return tp + fp + tn + fn; }
    void add(bool truth, bool predicted);
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    ConfusionCounts counts;
};

/// 0/0 ratios are defined as 0.
Metrics metrics(const ConfusionCounts& counts);

/// One test sample after inference. `ranking` is the full router ranking.
struct ScoredSample {
    bool truth = false;
    std::optional<CweId> cwe;
    moe::RoutedPrediction prediction;
    std::vector<CategoryId> ranking;
};

/// Runs predict over `indices` at the given k.
std::vector<ScoredSample> score(const moe::MoEModel& moe, const corpus::SplitCorpus& split,
                                std::span<const std::size_t> indices, const moe::EncodedStore& encoded,
                                std::optional<std::size_t> k = std::nullopt);

Metrics overall(std::span<const ScoredSample> scored);

/// Positives: vulnerable samples whose CWE is in `members`. Negatives: every
/// non-vulnerable sample (false positives are attributed to every group).
Metrics group_metrics(std::span<const ScoredSample> scored, const std::set<CweId>& members);

/// Pooled recall per evaluation group; groups with no vulnerable sample are omitted.
std::map<std::string, double> per_cwe_recall(std::span<const ScoredSample> scored, const corpus::CweEvalGroup& groups);

struct RoutingReport {
    std::size_t k = 0;
    double correct_fraction = 0.0;
    std::size_t evaluated = 0;
    std::size_t correct = 0;
    Metrics when_correct;  // negatives shared between both subsets
    Metrics when_wrong;
};

/// A vulnerable sample is routed correctly when its category is among the top
/// k of the ranking. Samples without a resolvable category are skipped.
RoutingReport routing_accuracy(std::span<const ScoredSample> scored, const taxonomy::CategoryMap& map, std::size_t k);

RoutingReport routing_accuracy(const moe::MoEModel& moe, const corpus::SplitCorpus& split,
                               std::span<const std::size_t> indices, const moe::EncodedStore& encoded);

/// Vulnerable samples with a known category go to their own expert with
/// weight 1; everything else goes through the learned router.
Metrics ideal_routing_eval(const moe::MoEModel& moe, const corpus::SplitCorpus& split,
                           std::span<const std::size_t> indices, const moe::EncodedStore& encoded);

struct ExpertMatrix {
    std::vector<CategoryId> experts;
    std::vector<CategoryId> categories;
    std::vector<std::vector<double>> f1;  // f1[expert][category]
};

/// F1 of each expert used alone, per category: positives are that category's
/// vulnerable samples, negatives all non-vulnerable samples.
ExpertMatrix expert_matrix(const std::map<CategoryId, moe::ExpertModel>& experts, std::span<const CategoryId> roster,
                           const corpus::SplitCorpus& split, std::span<const std::size_t> indices,
                           const moe::EncodedStore& encoded, const taxonomy::CategoryMap& map, double threshold = 0.5);

struct VariantRow {
    std::string variant;
    Metrics metrics;
    std::optional<double> routing_correct_fraction;
    std::string note;
};

struct EvalReport {
    Metrics overall;
    std::map<std::string, Metrics> per_cwe;  // recall is the primary figure
    Metrics head, tail;
    corpus::HeadTailPartition partition;
    RoutingReport routing;
    ExpertMatrix expert_matrix;
    std::optional<Metrics> ideal_routing;
    std::vector<VariantRow> variants;

    std::string to_json() const;
    /// overall.csv, per_cwe.csv, head_tail.csv, routing.csv, expert_matrix.csv, variants.csv
    void write_csv(const std::filesystem::path& dir) const;
};

/// Computes every report section except variants.
EvalReport evaluate(const moe::MoEModel& moe, const corpus::SplitCorpus& split, std::span<const std::size_t> test,
                    const moe::EncodedStore& encoded, const corpus::HeadTailPartition& partition,
                    bool with_ideal_routing = false);

}  // namespace moevd::eval
