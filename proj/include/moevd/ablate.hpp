#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "moevd/eval.hpp"
#include "moevd/moe.hpp"

namespace moevd::ablate {

using taxonomy::CategoryId;

enum class VariantKind { random_router, stack_ensemble, one_for_all, experts_nonvuln_negatives };

std::string to_string(VariantKind k);
VariantKind parse_variant_kind(std::string_view s);

struct VariantSpec {
    VariantKind kind = VariantKind::random_router;
    std::uint64_t seed = 0;
    learn::TrainConfig meta_config;  // stack_ensemble only
};

/// Draws k roster categories uniformly without replacement from `seed` and
/// weights them 1/k; experts and threshold are the MoE's own.
moe::RoutedPrediction random_router_predict(const moe::MoEModel& moe, const features::FeatureVector& x,
                                            std::uint64_t seed, std::optional<std::size_t> k = std::nullopt);

/// Logistic meta-classifier over the experts' positive-class probabilities.
struct StackModel {
    std::vector<CategoryId> roster;  // feature order
    learn::Model model;
    std::vector<double> loss_trace;
    double threshold = 0.5;
};

/// Expert probabilities for one input, in roster order. Each lies in [0, 1].
std::vector<double> stack_features(const moe::MoEModel& moe, const features::FeatureVector& x);

StackModel train_stack_ensemble(const moe::MoEModel& moe, const corpus::SplitCorpus& split,
                                const moe::EncodedStore& encoded, const learn::TrainConfig& meta_config);

double stack_probability(const StackModel& stack, const moe::MoEModel& moe, const features::FeatureVector& x);

/// A single binary classifier over every training sample, vulnerable = 1
/// regardless of CWE. Same encoder and core as the experts.
learn::TrainResult train_one_for_all(const corpus::SplitCorpus& split, const moe::EncodedStore& encoded,
                                     const moe::TrainPlan& plan);

/// The MoE with every expert retrained on non-vulnerable-only negatives.
moe::MoEModel retrain_nonvuln_negatives(const moe::MoEModel& moe, const corpus::SplitCorpus& split,
                                        const moe::EncodedStore& encoded, moe::TrainPlan plan);

/// Trains (where needed) and evaluates one variant on `test`.
eval::VariantRow run_variant(const VariantSpec& spec, const moe::MoEModel& moe, const corpus::SplitCorpus& split,
                             std::span<const std::size_t> test, const moe::EncodedStore& encoded,
                             const moe::TrainPlan& plan);

}  // namespace moevd::ablate
