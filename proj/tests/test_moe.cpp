#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "moevd/error.hpp"
#include "moevd/fixtures.hpp"
#include "moevd/moe.hpp"
#include "support.hpp"

using namespace moevd;
using namespace moevd::moe;

namespace {

taxonomy::CweId id(std::string_view s) { return taxonomy::CweId::parse(s); }

std::vector<RankedCategory> ranked(std::initializer_list<double> probs) {
    std::vector<RankedCategory> r;
    std::size_t i = 0;
    for (double p : probs) {
        r.push_back({"C" + std::to_string(i), p, std::log(p), i});
        ++i;
    }
    return r;
}

// Roster C0..C(n-1) with random linear router and experts over `dim` inputs.
MoEModel random_moe(std::size_t n, std::size_t dim, std::uint64_t seed) {
    std::string tree;
    std::map<taxonomy::CweId, std::size_t> counts;
    for (std::size_t i = 0; i < n; ++i) {
        tree += "CWE-" + std::to_string(i + 1) + "\n";
        counts[id("CWE-" + std::to_string(i + 1))] = 100 + 10 * (n - i);
    }
    MoEModel m;
    m.category_map = taxonomy::build_categories(taxonomy::load_tree(tree), counts, 1);
    m.router.roster = m.category_map.categories;
    m.router.model = learn::Model::linear(dim, n);
    moevd::testing::randomize(m.router.model, seed, 3.0);
    for (std::size_t i = 0; i < n; ++i) {
        ExpertModel e;
        e.category = m.router.roster[i];
        e.model = learn::Model::linear(dim, 1);
        moevd::testing::randomize(e.model, seed + 1 + i, 3.0);
        m.experts[e.category] = e;
    }
    m.encoder.dim = dim;
    m.k = std::min<std::size_t>(2, n);
    return m;
}

features::FeatureVector random_input(Rng& rng, std::size_t dim) {
    features::FeatureVector fv;
    fv.dim = dim;
    for (std::uint32_t i = 0; i < dim; ++i)
        if (rng.bernoulli(0.3)) fv.entries.push_back({i, rng.normal()});
    return fv;
}

}  // namespace

TEST(Combine, PaperWorkedExample) {
    auto r = ranked({0.45, 0.15});
    std::vector<double> e{0.8, 0.2};
    auto p = combine(r, e, 2);
    ASSERT_EQ(p.selected.size(), 2u);
    EXPECT_NEAR(p.selected[0].weight, 0.57, 0.005);
    EXPECT_NEAR(p.selected[1].weight, 0.43, 0.005);
    EXPECT_NEAR(p.selected[0].weight, std::exp(0.45) / (std::exp(0.45) + std::exp(0.15)), 1e-15);
}

TEST(Combine, ThreeWayHandEvaluation) {
    auto r = ranked({0.5, 0.3, 0.2});
    std::vector<double> e{0.9, 0.1, 0.4};
    auto p = combine(r, e, 2);
    EXPECT_NEAR(p.selected[0].weight, 0.5498, 1e-4);
    EXPECT_NEAR(p.selected[1].weight, 0.4502, 1e-4);
    EXPECT_NEAR(p.p_vul, 0.5398, 1e-4);
}

TEST(Combine, SingleExpert) {
    auto r = ranked({0.7, 0.3});
    std::vector<double> e{0.25, 0.9};
    auto p = combine(r, e, 1);
    ASSERT_EQ(p.selected.size(), 1u);
    EXPECT_EQ(p.selected[0].weight, 1.0);
    EXPECT_EQ(p.p_vul, 0.25);
}

TEST(Combine, LogitModeRenormalizesRouterProbabilities) {
    auto r = ranked({0.6, 0.3, 0.1});
    std::vector<double> e{1.0, 0.0, 0.0};
    auto p = combine(r, e, 2, CombineMode::logit_softmax);
    EXPECT_NEAR(p.selected[0].weight, 2.0 / 3.0, 1e-12);
}

TEST(Route, ZeroRouterKeepsRosterOrder) {
    auto m = random_moe(4, 8, 1);
    m.router.model = learn::Model::linear(8, 4);
    Rng rng(2);
    auto rk = route(m, random_input(rng, 8));
    ASSERT_EQ(rk.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(rk[i].category, m.roster()[i]);
        EXPECT_DOUBLE_EQ(rk[i].probability, 0.25);
    }
}

TEST(Predict, Invariants) {
    auto m = random_moe(5, 16, 3);
    Rng rng(4);
    for (int i = 0; i < 500; ++i) {
        auto x = random_input(rng, 16);
        for (std::size_t k = 1; k <= 5; ++k) {
            auto p = predict(m, x, k);
            ASSERT_EQ(p.selected.size(), k);
            double ws = 0, mix = 0, lo = 1, hi = 0;
            for (const auto& s : p.selected) {
                ws += s.weight;
                mix += s.weight * s.expert_prob;
                lo = std::min(lo, s.expert_prob);
                hi = std::max(hi, s.expert_prob);
            }
            EXPECT_NEAR(ws, 1.0, 1e-9);
            EXPECT_NEAR(p.p_vul, mix, 1e-9);
            EXPECT_GE(p.p_vul, lo - 1e-12);
            EXPECT_LE(p.p_vul, hi + 1e-12);
            EXPECT_EQ(p.vulnerable, p.p_vul >= m.threshold);
        }
        // Top-k selections are prefixes of each other.
        auto p2 = predict(m, x, 2), p3 = predict(m, x, 3);
        EXPECT_EQ(p2.selected[0].category, p3.selected[0].category);
        EXPECT_EQ(p2.selected[1].category, p3.selected[1].category);
    }
}

TEST(Predict, IdenticalExpertsFixedPoint) {
    auto m = random_moe(3, 8, 5);
    for (auto& [c, e] : m.experts) {
        e.model = learn::Model::linear(8, 1);
        e.model.b1 = {0.7};
    }
    Rng rng(6);
    const double p = 1.0 / (1.0 + std::exp(-0.7));
    for (int i = 0; i < 50; ++i)
        for (std::size_t k = 1; k <= 3; ++k) EXPECT_NEAR(predict(m, random_input(rng, 8), k).p_vul, p, 1e-12);
}

TEST(Predict, ThresholdIsInclusive) {
    auto m = random_moe(2, 4, 7);
    for (auto& [c, e] : m.experts) e.model = learn::Model::linear(4, 1);  // p = 0.5 exactly
    Rng rng(8);
    auto p = predict(m, random_input(rng, 4));
    EXPECT_EQ(p.p_vul, 0.5);
    EXPECT_TRUE(p.vulnerable);
}

TEST(Predict, EmptyFunctionBody) {
    auto m = random_moe(3, 1 << 10, 9);
    auto p = predict(m, std::string_view(""));
    EXPECT_EQ(p.selected.size(), 2u);
    EXPECT_TRUE(std::isfinite(p.p_vul));
}

TEST(Predict, ExhaustiveTwoCategorySum) {
    auto m = random_moe(2, 8, 10);
    Rng rng(11);
    for (int i = 0; i < 100; ++i) {
        auto x = random_input(rng, 8);
        auto r = learn::forward(m.router.model, x.row());
        double e0 = learn::forward(m.experts.at(m.roster()[0]).model, x.row())[0];
        double e1 = learn::forward(m.experts.at(m.roster()[1]).model, x.row())[0];
        const double w0 = std::exp(r[0]) / (std::exp(r[0]) + std::exp(r[1]));
        EXPECT_NEAR(predict(m, x, 2).p_vul, w0 * e0 + (1 - w0) * e1, 1e-12);
    }
}

TEST(Validate, RosterCoverageAndK) {
    auto m = random_moe(3, 8, 12);
    EXPECT_NO_THROW(m.validate());
    m.k = 4;
    EXPECT_THROW(m.validate(), ConfigError);
    m.k = 2;
    m.experts.erase(m.roster()[1]);
    EXPECT_THROW(m.validate(), ConfigError);
}

TEST(Bundle, RoundTripIsBitwise) {
    auto m = random_moe(4, 32, 13);
    m.router.model.round_to_float();
    for (auto& [c, e] : m.experts) e.model.round_to_float();
    const auto dir = std::filesystem::temp_directory_path() / "moevd_test_bundle";
    std::filesystem::remove_all(dir);
    save_bundle(m, dir);
    auto back = load_bundle(dir);
    EXPECT_EQ(back.roster(), m.roster());
    EXPECT_EQ(back.k, m.k);
    Rng rng(14);
    for (int i = 0; i < 200; ++i) {
        auto x = random_input(rng, 32);
        auto a = predict(m, x), b = predict(back, x);
        EXPECT_EQ(a.p_vul, b.p_vul);
        EXPECT_EQ(a.selected.size(), b.selected.size());
    }
    // Saving the loaded bundle reproduces the same bytes.
    const auto dir2 = dir.string() + "_2";
    std::filesystem::remove_all(dir2);
    save_bundle(back, dir2);
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        std::ifstream a(entry.path()), b(std::filesystem::path(dir2) / entry.path().filename());
        std::stringstream sa, sb;
        sa << a.rdbuf();
        sb << b.rdbuf();
        EXPECT_EQ(sa.str(), sb.str()) << entry.path();
    }
    EXPECT_THROW(load_bundle(dir.string() + "_missing"), Error);
}

namespace {

struct Trained {
    corpus::SplitCorpus split;
    taxonomy::CategoryMap map;
    EncodedStore encoded;
};

Trained two_category_setup() {
    fixtures::FixtureSpec spec;
    spec.name = "two";
    spec.seed = 5;
    spec.markers = {"strcpy(buf, src);", "free(ptr);"};
    spec.domains = {{"a", {"CWE-1"}, 60, 60, 0, 0}, {"b", {"CWE-2"}, 50, 60, 1, 1}};
    auto fx = fixtures::generate(spec);
    auto store = std::make_shared<const std::vector<corpus::CodeSample>>(fx.samples);
    Trained t;
    t.split = corpus::split(store, 3);
    t.map = taxonomy::build_categories(taxonomy::load_tree(fx.taxonomy),
                                       corpus::vulnerable_counts(t.split, t.split.train), 1);
    t.encoded = encode_store(*store, {"hashed-ngram", 1 << 12, 2, 1});
    return t;
}

}  // namespace

TEST(TrainAll, TwoCategories) {
    auto t = two_category_setup();
    TrainPlan plan;
    plan.expert.learning_rate = plan.router.learning_rate = 0.05;
    auto m = train_all(t.split, t.map, t.encoded, plan);
    EXPECT_EQ(m.experts.size(), 2u);
    EXPECT_EQ(m.router.model.out_dim, 2u);
    EXPECT_EQ(m.router.loss_trace.size(), 10u);
    // Router trained with focal loss and 1/fraction class weights.
    EXPECT_EQ(m.router.train.loss.kind, learn::LossKind::focal);
    EXPECT_EQ(m.router.train.loss.alpha.size(), 2u);
}

TEST(TrainAll, EmptyCategoryIsNamed) {
    auto t = two_category_setup();
    t.map.categories.push_back("CWE-777");
    t.map.category_counts["CWE-777"] = 1;
    try {
        train_all(t.split, t.map, t.encoded, TrainPlan{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("CWE-777"), std::string::npos) << e.what();
    }
}

TEST(TrainAll, WorkerCountDoesNotChangeWeights) {
    auto t = two_category_setup();
    TrainPlan one, four;
    four.workers = 4;
    auto a = train_all(t.split, t.map, t.encoded, one);
    auto b = train_all(t.split, t.map, t.encoded, four);
    EXPECT_EQ(a.router.model.w1, b.router.model.w1);
    for (const auto& c : a.roster()) EXPECT_EQ(a.expert(c).model.w1, b.expert(c).model.w1);
}
