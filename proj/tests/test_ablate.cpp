#include <gtest/gtest.h>

#include "moevd/ablate.hpp"
#include "moevd/fixtures.hpp"
#include "support.hpp"

using namespace moevd;
using namespace moevd::ablate;

namespace {

struct Setup {
    corpus::SplitCorpus split;
    moe::MoEModel moe;
    moe::EncodedStore encoded;
    moe::TrainPlan plan;
};

Setup trained(std::vector<fixtures::DomainSpec> domains, std::vector<std::string> markers, std::uint64_t seed) {
    fixtures::FixtureSpec spec;
    spec.name = "ab";
    spec.seed = seed;
    spec.markers = std::move(markers);
    spec.domains = std::move(domains);
    auto fx = fixtures::generate(spec);
    Setup s;
    auto store = std::make_shared<const std::vector<corpus::CodeSample>>(fx.samples);
    s.split = corpus::split(store, seed);
    auto map = taxonomy::build_categories(taxonomy::load_tree(fx.taxonomy),
                                          corpus::vulnerable_counts(s.split, s.split.train), 1);
    s.encoded = moe::encode_store(*store, {"hashed-ngram", 1 << 12, 2, 1});
    s.plan.expert.learning_rate = s.plan.router.learning_rate = 0.05;
    s.moe = moe::train_all(s.split, map, s.encoded, s.plan);
    return s;
}

Setup two_domains() {
    return trained({{"a", {"CWE-1"}, 60, 60, 0, 0}, {"b", {"CWE-2"}, 50, 60, 1, 1}},
                   {"strcpy(buf, src);", "free(ptr);"}, 21);
}

}  // namespace

TEST(RandomRouter, ExhaustiveDrawOnTwoCategories) {
    auto s = two_domains();
    for (std::size_t i = 0; i < 20; ++i) {
        auto p = random_router_predict(s.moe, s.encoded[i], i, 2);
        ASSERT_EQ(p.selected.size(), 2u);
        EXPECT_NE(p.selected[0].category, p.selected[1].category);
        EXPECT_EQ(p.selected[0].weight, 0.5);
        EXPECT_EQ(p.selected[1].weight, 0.5);
    }
}

TEST(RandomRouter, Deterministic) {
    auto s = two_domains();
    for (std::size_t i = 0; i < 20; ++i) {
        auto a = random_router_predict(s.moe, s.encoded[i], 1000 + i, 1);
        auto b = random_router_predict(s.moe, s.encoded[i], 1000 + i, 1);
        EXPECT_EQ(a.selected[0].category, b.selected[0].category);
        EXPECT_EQ(a.p_vul, b.p_vul);
    }
}

TEST(Stack, FeatureDimensionAndConstantExperts) {
    auto s = two_domains();
    EXPECT_EQ(stack_features(s.moe, s.encoded[0]).size(), s.moe.roster().size());
    auto flat = s.moe;
    for (auto& [c, e] : flat.experts) e.model = learn::Model::linear(s.encoded.encoder.dim, 1);
    for (double f : stack_features(flat, s.encoded[3])) EXPECT_EQ(f, 0.5);
    // Uninformative features: every input gets the same probability.
    auto stack = train_stack_ensemble(flat, s.split, s.encoded, s.plan.expert);
    const double p0 = stack_probability(stack, flat, s.encoded[0]);
    for (std::size_t i = 1; i < 30; ++i) EXPECT_EQ(stack_probability(stack, flat, s.encoded[i]), p0);
}

TEST(Stack, PerfectExpertGivesPerfectTrainAccuracy) {
    auto s = two_domains();
    // The first expert sees a coordinate set only on vulnerable samples.
    auto m = s.moe;
    auto& e = m.experts.at(m.roster()[0]);
    e.model = learn::Model::linear(s.encoded.encoder.dim, 1);
    e.model.b1 = {-20.0};
    std::vector<moe::FeatureVector> rows = s.encoded.rows;
    const std::uint32_t flag = static_cast<std::uint32_t>(s.encoded.encoder.dim - 1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto& r = rows[i];
        std::erase_if(r.entries, [&](const features::Entry& x) { return x.index == flag; });
        if (s.split.at(i).vulnerable()) r.entries.push_back({flag, 1.0});
    }
    moe::EncodedStore enc{s.encoded.encoder, rows};
    e.model.w1[flag] = 40.0;
    auto cfg = s.plan.expert;
    cfg.epochs = 30;
    auto stack = train_stack_ensemble(m, s.split, enc, cfg);
    for (auto i : s.split.train)
        EXPECT_EQ(stack_probability(stack, m, enc[i]) >= 0.5, s.split.at(i).vulnerable()) << i;
}

TEST(OneForAll, ConflictingPatternsFavourMoE) {
    // The same marker means "vulnerable" in one domain and "clean" in the other.
    auto s = trained({{"a", {"CWE-1"}, 70, 70, 0, 1}, {"b", {"CWE-2"}, 70, 70, 1, 0}},
                     {"strcpy(buf, src);", "free(ptr);"}, 31);
    auto ofa = run_variant({VariantKind::one_for_all, 1, {}}, s.moe, s.split, s.split.test, s.encoded, s.plan);
    auto m = eval::overall(eval::score(s.moe, s.split, s.split.test, s.encoded));
    EXPECT_GE(m.f1, ofa.metrics.f1);
    auto again = run_variant({VariantKind::one_for_all, 1, {}}, s.moe, s.split, s.split.test, s.encoded, s.plan);
    EXPECT_EQ(again.metrics.counts, ofa.metrics.counts);
}

TEST(NonvulnNegatives, RecordsMode) {
    auto s = two_domains();
    auto v = retrain_nonvuln_negatives(s.moe, s.split, s.encoded, s.plan);
    EXPECT_EQ(v.training_mode, corpus::NegativeMode::nonvuln_only_negatives);
    for (const auto& [c, e] : v.experts) EXPECT_EQ(e.training_mode, corpus::NegativeMode::nonvuln_only_negatives);
    EXPECT_THROW(parse_variant_kind("nope"), ConfigError);
    for (auto k : {VariantKind::random_router, VariantKind::stack_ensemble, VariantKind::one_for_all,
                   VariantKind::experts_nonvuln_negatives})
        EXPECT_EQ(parse_variant_kind(to_string(k)), k);
}
