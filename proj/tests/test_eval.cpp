#include <gtest/gtest.h>

#include <filesystem>

#include <json.hpp>

#include "moevd/eval.hpp"
#include "moevd/fixtures.hpp"

using namespace moevd;
using namespace moevd::eval;

namespace {

CweId id(std::string_view s) { return CweId::parse(s); }

ScoredSample scored(bool truth, std::optional<std::string> cwe, bool predicted,
                    std::vector<CategoryId> ranking = {}) {
    ScoredSample s;
    s.truth = truth;
    if (cwe) s.cwe = id(*cwe);
    s.prediction.vulnerable = predicted;
    s.prediction.p_vul = predicted ? 1.0 : 0.0;
    s.ranking = std::move(ranking);
    return s;
}

}  // namespace

TEST(Metrics, Examples) {
    auto perfect = metrics({1, 0, 0, 0});
    EXPECT_EQ(perfect.precision, 1.0);
    EXPECT_EQ(perfect.recall, 1.0);
    EXPECT_EQ(perfect.f1, 1.0);

    auto none = metrics({0, 0, 5, 0});
    EXPECT_EQ(none.precision, 0.0);
    EXPECT_EQ(none.recall, 0.0);
    EXPECT_EQ(none.f1, 0.0);

    auto m = metrics({30, 40, 0, 35});
    EXPECT_NEAR(m.precision, 3.0 / 7.0, 1e-15);
    EXPECT_NEAR(m.recall, 30.0 / 65.0, 1e-15);
    EXPECT_NEAR(m.precision, 0.4286, 1e-4);
    EXPECT_NEAR(m.recall, 0.4615, 1e-4);
    EXPECT_NEAR(m.f1, 0.4444, 1e-4);
}

TEST(PerCweRecall, GroupsAndPooling) {
    std::vector<ScoredSample> s;
    for (int i = 0; i < 4; ++i) s.push_back(scored(true, "CWE-1", i < 3));
    for (int i = 0; i < 4; ++i) s.push_back(scored(true, "CWE-2", i < 1));
    for (int i = 0; i < 5; ++i) s.push_back(scored(true, "CWE-3", i < 2));
    s.push_back(scored(false, std::nullopt, true));
    corpus::CweEvalGroup g;
    g.groups["CWE-1"] = {id("CWE-1")};
    g.groups["CWE-N<=10"] = {id("CWE-2"), id("CWE-3")};
    g.groups["CWE-9"] = {id("CWE-9")};
    auto r = per_cwe_recall(s, g);
    EXPECT_EQ(r.size(), 2u);
    EXPECT_DOUBLE_EQ(r.at("CWE-1"), 0.75);
    EXPECT_NEAR(r.at("CWE-N<=10"), 3.0 / 9.0, 1e-15);
}

TEST(GroupMetrics, NegativesAttributedToEveryGroup) {
    std::vector<ScoredSample> s{scored(true, "CWE-1", true), scored(true, "CWE-2", true),
                                scored(false, std::nullopt, true), scored(false, std::nullopt, false)};
    auto a = group_metrics(s, {id("CWE-1")});
    EXPECT_EQ(a.counts, (ConfusionCounts{1, 1, 1, 0}));
    auto b = group_metrics(s, {id("CWE-2")});
    EXPECT_EQ(b.counts, (ConfusionCounts{1, 1, 1, 0}));
}

TEST(Routing, CorrectFraction) {
    auto tree = taxonomy::load_tree("CWE-1\nCWE-2\nCWE-3\n");
    auto map = taxonomy::build_categories(tree, {{id("CWE-1"), 5}, {id("CWE-2"), 4}, {id("CWE-3"), 3}}, 1);
    std::vector<CategoryId> r12{"CWE-1", "CWE-2", "CWE-3"}, r32{"CWE-3", "CWE-2", "CWE-1"};
    std::vector<ScoredSample> s{scored(true, "CWE-1", true, r12), scored(true, "CWE-1", false, r32),
                                scored(true, "CWE-3", true, r32), scored(true, std::nullopt, true, r12),
                                scored(false, std::nullopt, true, r12)};
    auto k1 = routing_accuracy(s, map, 1);
    EXPECT_EQ(k1.evaluated, 3u);
    EXPECT_EQ(k1.correct, 2u);
    EXPECT_EQ(k1.when_correct.counts, (ConfusionCounts{2, 1, 0, 0}));
    EXPECT_EQ(k1.when_wrong.counts, (ConfusionCounts{0, 1, 0, 1}));
    EXPECT_EQ(routing_accuracy(s, map, 3).correct_fraction, 1.0);
}

namespace {

struct Setup {
    corpus::SplitCorpus split;
    moe::MoEModel moe;
    moe::EncodedStore encoded;
};

Setup trained_three() {
    fixtures::FixtureSpec spec;
    spec.name = "three";
    spec.seed = 8;
    spec.markers = {"strcpy(buf, src);", "free(ptr);", "n = atoi(str);"};
    spec.domains = {{"a", {"CWE-1"}, 60, 60, 0, 0}, {"b", {"CWE-2"}, 50, 60, 1, 1}, {"c", {"CWE-3"}, 40, 60, 2, 2}};
    auto fx = fixtures::generate(spec);
    Setup s;
    auto store = std::make_shared<const std::vector<corpus::CodeSample>>(fx.samples);
    s.split = corpus::split(store, 4);
    auto map = taxonomy::build_categories(taxonomy::load_tree(fx.taxonomy),
                                          corpus::vulnerable_counts(s.split, s.split.train), 1);
    s.encoded = moe::encode_store(*store, {"hashed-ngram", 1 << 12, 2, 1});
    moe::TrainPlan plan;
    plan.expert.learning_rate = plan.router.learning_rate = 0.05;
    s.moe = moe::train_all(s.split, map, s.encoded, plan);
    return s;
}

}  // namespace

TEST(ExpertMatrix, ShapesAndConstantExpert) {
    auto s = trained_three();
    auto em = expert_matrix(s.moe.experts, s.moe.roster(), s.split, s.split.test, s.encoded, s.moe.category_map);
    ASSERT_EQ(em.f1.size(), 3u);
    for (std::size_t e = 0; e < 3; ++e)
        for (std::size_t c = 0; c < 3; ++c)
            if (c != e) EXPECT_GT(em.f1[e][e], em.f1[e][c]);

    auto experts = s.moe.experts;
    experts.at(s.moe.roster()[0]).model = learn::Model::linear(s.encoded.encoder.dim, 1);
    experts.at(s.moe.roster()[0]).model.b1 = {-50.0};
    auto zero = expert_matrix(experts, s.moe.roster(), s.split, s.split.test, s.encoded, s.moe.category_map);
    for (double v : zero.f1[0]) EXPECT_EQ(v, 0.0);

    std::vector<CategoryId> one{s.moe.roster()[1]};
    auto single = expert_matrix(s.moe.experts, one, s.split, s.split.test, s.encoded, s.moe.category_map);
    EXPECT_EQ(single.f1.size(), 1u);
    EXPECT_EQ(single.f1[0].size(), 1u);
}

TEST(IdealRouting, BoundsStandardEvaluation) {
    auto s = trained_three();
    auto standard = overall(score(s.moe, s.split, s.split.test, s.encoded));
    auto ideal = ideal_routing_eval(s.moe, s.split, s.split.test, s.encoded);
    EXPECT_GE(ideal.recall, standard.recall);

    // With k = 1 and a router that is already right on every sample both evaluations agree.
    auto k1 = s.moe;
    k1.k = 1;
    auto sc = score(k1, s.split, s.split.test, s.encoded);
    if (routing_accuracy(sc, k1.category_map, 1).correct_fraction == 1.0) {
        auto a = overall(sc);
        auto b = ideal_routing_eval(k1, s.split, s.split.test, s.encoded);
        EXPECT_EQ(a.counts, b.counts);
    }
}

TEST(Report, SectionsAndCsv) {
    auto s = trained_three();
    std::vector<std::size_t> all(s.split.store->size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    auto part = corpus::head_tail(corpus::vulnerable_counts(s.split, all));
    auto rep = evaluate(s.moe, s.split, s.split.test, s.encoded, part, true);
    ASSERT_TRUE(rep.ideal_routing.has_value());
    auto j = nlohmann::json::parse(rep.to_json());
    for (const char* key : {"overall", "per_cwe", "head_tail", "routing", "expert_matrix", "ideal_routing"})
        EXPECT_TRUE(j.contains(key)) << key;
    const auto dir = std::filesystem::temp_directory_path() / "moevd_test_report";
    std::filesystem::remove_all(dir);
    rep.write_csv(dir);
    for (const char* f : {"overall.csv", "per_cwe.csv", "head_tail.csv", "routing.csv", "expert_matrix.csv", "variants.csv"})
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
}
