#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moevd/corpus.hpp"
#include "moevd/cwe_taxonomy.hpp"
#include "moevd/features.hpp"
#include "moevd/learn.hpp"

namespace moevd::moe {

using corpus::NegativeMode;
using features::FeatureVector;
using taxonomy::CategoryId;
using taxonomy::CategoryMap;

/// How the combiner turns the selected router scores into weights. The
/// default exponentiates the router probabilities themselves, which is what
/// maps (0.45, 0.15) to (0.57, 0.43).
enum class CombineMode { probability_softmax, logit_softmax };

std::string to_string(CombineMode m);
CombineMode parse_combine_mode(std::string_view s);

/// Feature vectors for every sample in a store, index-aligned.
struct EncodedStore {
    features::EncoderConfig encoder;
    std::vector<FeatureVector> rows;

    const FeatureVector& operator[](std::size_t i) const { return rows[i]; }
};

EncodedStore encode_store(const std::vector<corpus::CodeSample>& samples, const features::EncoderConfig& cfg,
                          std::size_t workers = 1);

struct ExpertModel {
    CategoryId category;
    learn::Model model;
    NegativeMode training_mode = NegativeMode::all_negatives;
    learn::TrainConfig train;
    std::vector<double> loss_trace;
    double train_seconds = 0.0;  // not persisted
};

struct RouterModel {
    learn::Model model;
    std::vector<CategoryId> roster;  // output coordinate order
    learn::TrainConfig train;
    std::vector<double> loss_trace;
    double train_seconds = 0.0;
};

struct MoEModel {
    RouterModel router;
    std::map<CategoryId, ExpertModel> experts;
    std::size_t k = 2;
    double threshold = 0.5;
    CombineMode combine = CombineMode::probability_softmax;
    NegativeMode training_mode = NegativeMode::all_negatives;
    CategoryMap category_map;
    features::EncoderConfig encoder;

    const ExpertModel& expert(const CategoryId& c) const;
    const std::vector<CategoryId>& roster() const noexcept { return router.roster; }

    /// Throws ConfigError when experts do not cover the roster or k is out of range.
    void validate() const;
};

struct TrainPlan {
    learn::TrainConfig expert;
    learn::TrainConfig router;
    learn::ModelKind kind = learn::ModelKind::linear;
    std::size_t hidden_dim = 64;
    double focal_gamma = 1.0;
    NegativeMode mode = NegativeMode::all_negatives;
    std::size_t k = 2;
    double threshold = 0.5;
    CombineMode combine = CombineMode::probability_softmax;
    std::size_t workers = 1;
};

/// Trains one binary expert per roster category and the focal-loss router.
/// Each model is trained single-threaded; `plan.workers` only spreads whole
/// models over threads, so the result does not depend on it.
MoEModel train_all(const corpus::SplitCorpus& split, const CategoryMap& map, const EncodedStore& encoded,
                   const TrainPlan& plan);

/// Trains one expert (used by train_all and by the negative-set variant).
ExpertModel train_expert(const corpus::SplitCorpus& split, const CategoryMap& map, const EncodedStore& encoded,
                         const CategoryId& category, const TrainPlan& plan);

RouterModel train_router(const corpus::SplitCorpus& split, const CategoryMap& map, const EncodedStore& encoded,
                         const TrainPlan& plan);

struct RankedCategory {
    CategoryId category;
    double probability = 0.0;
    double logit = 0.0;
    std::size_t roster_index = 0;
};

/// Full roster ranked by router probability, descending; ties keep roster order.
std::vector<RankedCategory> route(const MoEModel& moe, const FeatureVector& x);
std::vector<RankedCategory> route(const MoEModel& moe, std::string_view code);

struct SelectedExpert {
    CategoryId category;
    double router_prob = 0.0;
    double weight = 0.0;
    double expert_prob = 0.0;
};

struct RoutedPrediction {
    double p_vul = 0.0;
    std::vector<SelectedExpert> selected;
    bool vulnerable = false;
};

/// Softmax-weighted sum over the first k ranked categories. `expert_probs[i]`
/// belongs to `ranked[i]`. Does not apply a threshold (decision left false).
RoutedPrediction combine(std::span<const RankedCategory> ranked, std::span<const double> expert_probs, std::size_t k,
                         CombineMode mode = CombineMode::probability_softmax);

/// Probability from one expert.
double expert_probability(const ExpertModel& expert, const FeatureVector& x);

using ExpertEvaluator = std::function<double(const CategoryId&, const FeatureVector&)>;

/// route -> evaluate exactly k experts through `eval` -> combine -> threshold.
RoutedPrediction predict_with(const MoEModel& moe, const FeatureVector& x, std::size_t k, const ExpertEvaluator& eval);

RoutedPrediction predict(const MoEModel& moe, const FeatureVector& x, std::optional<std::size_t> k = std::nullopt);
RoutedPrediction predict(const MoEModel& moe, std::string_view code, std::optional<std::size_t> k = std::nullopt);

/// Bundle directory: manifest.json, category_map.json, router.json and one
/// expert_<nn>.json per roster position.
void save_bundle(const MoEModel& moe, const std::filesystem::path& dir);
MoEModel load_bundle(const std::filesystem::path& dir);

}  // namespace moevd::moe
