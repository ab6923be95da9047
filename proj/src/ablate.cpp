#include "moevd/ablate.hpp"

#include <numeric>

#include "moevd/error.hpp"
#include "moevd/rng.hpp"

namespace moevd::ablate {

std::string to_string(VariantKind k) {
    switch (k) {
        case VariantKind::random_router: return "random-router";
        case VariantKind::stack_ensemble: return "stack-ensemble";
        case VariantKind::one_for_all: return "one-for-all";
        case VariantKind::experts_nonvuln_negatives: return "nonvuln-negatives";
    }
    return "?";
}

VariantKind parse_variant_kind(std::string_view s) {
    for (auto k : {VariantKind::random_router, VariantKind::stack_ensemble, VariantKind::one_for_all,
                   VariantKind::experts_nonvuln_negatives})
        if (s == to_string(k)) return k;
    throw ConfigError("unknown variant '" + std::string(s) +
                      "' (expected random-router, stack-ensemble, one-for-all, nonvuln-negatives)");
}

moe::RoutedPrediction random_router_predict(const moe::MoEModel& moe, const features::FeatureVector& x,
                                            std::uint64_t seed, std::optional<std::size_t> k_opt) {
    const auto& roster = moe.roster();
    const std::size_t k = k_opt.value_or(moe.k);
    if (k < 1 || k > roster.size()) throw ConfigError("random router: k out of range");

    std::vector<std::size_t> order(roster.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = 0; i < k; ++i) std::swap(order[i], order[i + rng.below(order.size() - i)]);

    moe::RoutedPrediction out;
    const double w = 1.0 / static_cast<double>(k);
    const double uniform = 1.0 / static_cast<double>(roster.size());
    for (std::size_t i = 0; i < k; ++i) {
        const auto& cat = roster[order[i]];
        const double p = moe::expert_probability(moe.expert(cat), x);
        out.selected.push_back({cat, uniform, w, p});
        out.p_vul += w * p;
    }
    out.vulnerable = out.p_vul >= moe.threshold;
    return out;
}

std::vector<double> stack_features(const moe::MoEModel& moe, const features::FeatureVector& x) {
    std::vector<double> f;
    f.reserve(moe.roster().size());
    for (const auto& c : moe.roster()) f.push_back(moe::expert_probability(moe.expert(c), x));
    return f;
}

namespace {

std::vector<features::Entry> dense_entries(const std::vector<double>& f) {
    std::vector<features::Entry> e;
    e.reserve(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) e.push_back({static_cast<std::uint32_t>(i), f[i]});
    return e;
}

}  // namespace

StackModel train_stack_ensemble(const moe::MoEModel& moe, const corpus::SplitCorpus& split,
                                const moe::EncodedStore& encoded, const learn::TrainConfig& meta_config) {
    const std::size_t dim = moe.roster().size();
    std::vector<std::vector<features::Entry>> rows;
    rows.reserve(split.train.size());
    for (auto i : split.train) rows.push_back(dense_entries(stack_features(moe, encoded[i])));
    std::vector<learn::Example> data;
    data.reserve(rows.size());
    for (std::size_t n = 0; n < rows.size(); ++n)
        data.push_back({{dim, rows[n]}, split.at(split.train[n]).vulnerable() ? 1 : 0});

    learn::TrainConfig cfg = meta_config;
    cfg.loss = learn::LossSpec::binary();
    auto result = learn::train(learn::Model::linear(dim, 1), data, cfg);
    StackModel stack;
    stack.roster = moe.roster();
    stack.model = std::move(result.model);
    stack.loss_trace = std::move(result.epoch_loss);
    stack.threshold = moe.threshold;
    return stack;
}

double stack_probability(const StackModel& stack, const moe::MoEModel& moe, const features::FeatureVector& x) {
    const auto entries = dense_entries(stack_features(moe, x));
    return learn::forward(stack.model, {stack.roster.size(), entries})[0];
}

learn::TrainResult train_one_for_all(const corpus::SplitCorpus& split, const moe::EncodedStore& encoded,
                                     const moe::TrainPlan& plan) {
    if (split.train.empty()) throw TrainingDataError("one-for-all: empty training split");
    learn::TrainConfig cfg = plan.expert;
    cfg.seed = derive_seed(plan.expert.seed, 0x0F0A);
    cfg.loss = learn::LossSpec::binary();
    std::vector<learn::Example> data;
    data.reserve(split.train.size());
    for (auto i : split.train) data.push_back({encoded[i].row(), split.at(i).vulnerable() ? 1 : 0});
    Rng rng(derive_seed(cfg.seed, 0xE));
    rng.shuffle(std::span(data));
    learn::Model init = plan.kind == learn::ModelKind::linear
                            ? learn::Model::linear(encoded.encoder.dim, 1)
                            : learn::Model::mlp1(encoded.encoder.dim, plan.hidden_dim, 1, cfg.seed);
    return learn::train(std::move(init), data, cfg);
}

moe::MoEModel retrain_nonvuln_negatives(const moe::MoEModel& moe, const corpus::SplitCorpus& split,
                                        const moe::EncodedStore& encoded, moe::TrainPlan plan) {
    plan.mode = corpus::NegativeMode::nonvuln_only_negatives;
    moe::MoEModel out = moe;
    out.training_mode = plan.mode;
    for (const auto& c : moe.roster()) out.experts[c] = moe::train_expert(split, moe.category_map, encoded, c, plan);
    return out;
}

eval::VariantRow run_variant(const VariantSpec& spec, const moe::MoEModel& moe, const corpus::SplitCorpus& split,
                             std::span<const std::size_t> test, const moe::EncodedStore& encoded,
                             const moe::TrainPlan& plan) {
    eval::VariantRow row;
    row.variant = to_string(spec.kind);
    eval::ConfusionCounts counts;

    switch (spec.kind) {
        case VariantKind::random_router: {
            std::vector<eval::ScoredSample> scored;
            for (auto i : test) {
                eval::ScoredSample s;
                s.truth = split.at(i).vulnerable();
                s.cwe = split.at(i).cwe;
                s.prediction = random_router_predict(moe, encoded[i], derive_seed(spec.seed, i));
                for (const auto& sel : s.prediction.selected) s.ranking.push_back(sel.category);
                counts.add(s.truth, s.prediction.vulnerable);
                scored.push_back(std::move(s));
            }
            row.routing_correct_fraction = eval::routing_accuracy(scored, moe.category_map, moe.k).correct_fraction;
            row.note = "experts chosen uniformly at random, weights 1/k";
            break;
        }
        case VariantKind::stack_ensemble: {
            const auto stack = train_stack_ensemble(moe, split, encoded, spec.meta_config);
            for (auto i : test)
                counts.add(split.at(i).vulnerable(), stack_probability(stack, moe, encoded[i]) >= stack.threshold);
            row.note = "logistic stacker over expert probabilities; directional comparison only";
            break;
        }
        case VariantKind::one_for_all: {
            const auto model = train_one_for_all(split, encoded, plan).model;
            for (auto i : test)
                counts.add(split.at(i).vulnerable(), learn::forward(model, encoded[i].row())[0] >= moe.threshold);
            row.note = "single binary classifier over all vulnerability types";
            break;
        }
        case VariantKind::experts_nonvuln_negatives: {
            const auto variant = retrain_nonvuln_negatives(moe, split, encoded, plan);
            auto scored = eval::score(variant, split, test, encoded);
            for (const auto& s : scored) counts.add(s.truth, s.prediction.vulnerable);
            row.routing_correct_fraction = eval::routing_accuracy(scored, moe.category_map, moe.k).correct_fraction;
            row.note = "experts trained with non-vulnerable code as the only negatives";
            break;
        }
    }
    row.metrics = eval::metrics(counts);
    return row;
}

}  // namespace moevd::ablate
