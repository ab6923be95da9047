#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "moevd/cwe_taxonomy.hpp"

using namespace moevd;
using namespace moevd::taxonomy;

namespace {

CweId id(std::string_view s) { return CweId::parse(s); }

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(CweId, CanonicalForm) {
    EXPECT_EQ(id("cwe-0119").str(), "CWE-119");
    EXPECT_EQ(id("CWE-noinfo").str(), "CWE-noinfo");
    EXPECT_EQ(id("cwe-NOINFO").str(), "CWE-noinfo");
    EXPECT_TRUE(id("CWE-noinfo").is_noinfo());
    EXPECT_THROW(id("CWE-"), ParseError);
    EXPECT_THROW(id("119"), ParseError);
    EXPECT_THROW(id("CWE-12a"), ParseError);
    EXPECT_FALSE(CweId::try_parse("nope").has_value());
}

TEST(CweTree, Figure2Edges) {
    auto tree = load_tree("CWE-664\tCWE-118\nCWE-664\tCWE-221\n");
    EXPECT_EQ(tree.roots(), std::set<CweId>{id("CWE-664")});
    EXPECT_EQ(tree.children(id("CWE-664")), (std::set<CweId>{id("CWE-118"), id("CWE-221")}));
    EXPECT_EQ(tree.top_level_of(id("CWE-221")), std::set<CweId>{id("CWE-664")});
    EXPECT_EQ(tree.top_level_of(id("CWE-664")), std::set<CweId>{id("CWE-664")});
}

TEST(CweTree, SingleNode) {
    CweTree tree({id("CWE-20")}, {});
    EXPECT_EQ(tree.roots(), std::set<CweId>{id("CWE-20")});
    auto loaded = load_tree("# comment\n\nCWE-20\n");
    EXPECT_EQ(loaded.nodes(), std::set<CweId>{id("CWE-20")});
}

TEST(CweTree, CycleIsAnError) {
    EXPECT_THROW(load_tree("CWE-1\tCWE-2\nCWE-2\tCWE-1\n"), TaxonomyError);
    EXPECT_THROW(load_tree("CWE-5\tCWE-5\n"), TaxonomyError);
}

TEST(CweTree, NoInfoCannotTakePartInEdges) {
    EXPECT_THROW(load_tree("CWE-noinfo\tCWE-2\n"), TaxonomyError);
}

TEST(CweTree, ParseErrorCarriesLine) {
    try {
        load_tree("CWE-1\tCWE-2\nCWE-1\tbogus\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(CweTree, TwoRootAncestors) {
    // A and B are roots; C under both, D under C.
    auto tree = load_tree("CWE-1\tCWE-3\nCWE-2\tCWE-3\nCWE-3\tCWE-4\n");
    EXPECT_EQ(tree.top_level_of(id("CWE-4")), (std::set<CweId>{id("CWE-1"), id("CWE-2")}));
    EXPECT_EQ(tree.top_level_of(id("CWE-noinfo")), std::set<CweId>{id("CWE-noinfo")});
    EXPECT_THROW(tree.top_level_of(id("CWE-77")), LookupError);
}

TEST(BuildCategories, SingleRetainedId) {
    CweTree tree({id("CWE-20")}, {});
    auto map = build_categories(tree, {{id("CWE-20"), 150}}, 100);
    EXPECT_EQ(map.categories, std::vector<CategoryId>{"CWE-20"});
    EXPECT_TRUE(map.agg_members.empty());
    EXPECT_FALSE(map.has_category("CWE-agg"));
}

TEST(BuildCategories, ThresholdFold) {
    auto tree = load_tree("CWE-1\tCWE-11\nCWE-2\tCWE-21\nCWE-3\tCWE-31\n");
    auto map = build_categories(tree, {{id("CWE-11"), 120}, {id("CWE-21"), 40}, {id("CWE-31"), 30}}, 100);
    EXPECT_EQ(map.categories, (std::vector<CategoryId>{"CWE-1", "CWE-agg"}));
    EXPECT_EQ(map.agg_members, (std::set<CweId>{id("CWE-2"), id("CWE-21"), id("CWE-3"), id("CWE-31")}));
    EXPECT_EQ(map.category_counts.at("CWE-agg"), 70u);
    EXPECT_EQ(category_of(map, id("CWE-31")), "CWE-agg");
    EXPECT_EQ(category_of(map, id("CWE-11")), "CWE-1");
}

TEST(BuildCategories, MultiRootTieBreak) {
    // CWE-4 reaches both roots; CWE-2 has the larger aggregate.
    auto tree = load_tree("CWE-1\tCWE-3\nCWE-2\tCWE-3\nCWE-2\tCWE-5\n");
    auto map = build_categories(tree, {{id("CWE-3"), 10}, {id("CWE-5"), 5}}, 1);
    EXPECT_EQ(category_of(map, id("CWE-3")), "CWE-2");
    // Equal aggregates: lexicographically smallest root wins.
    auto tie = build_categories(load_tree("CWE-1\tCWE-3\nCWE-2\tCWE-3\n"), {{id("CWE-3"), 10}}, 1);
    EXPECT_EQ(category_of(tie, id("CWE-3")), "CWE-1");
}

TEST(CategoryOf, FallbackAndLookupError) {
    auto tree = load_tree("CWE-1\tCWE-11\nCWE-2\tCWE-21\n");
    auto map = build_categories(tree, {{id("CWE-11"), 120}, {id("CWE-21"), 4}}, 100);
    EXPECT_EQ(category_of(map, id("CWE-9999")), "CWE-agg");
    map.fallback_to_agg = false;
    EXPECT_THROW(category_of(map, id("CWE-9999")), LookupError);

    auto no_agg = build_categories(tree, {{id("CWE-11"), 120}, {id("CWE-21"), 100}}, 100);
    EXPECT_THROW(category_of(no_agg, id("CWE-9999")), LookupError);
}

TEST(CategoryMap, JsonRoundTrip) {
    auto tree = load_tree(slurp(MOEVD_DATA_DIR "/taxonomy/fixture_tree.tsv"));
    auto map = build_categories(tree, {{id("CWE-119"), 60}, {id("CWE-20"), 30}, {id("CWE-190"), 5}}, 20);
    const auto text = map.to_json();
    const auto back = CategoryMap::from_json(text);
    EXPECT_EQ(back.assignment, map.assignment);
    EXPECT_EQ(back.categories, map.categories);
    EXPECT_EQ(back.agg_members, map.agg_members);
    EXPECT_EQ(back.category_counts, map.category_counts);
    EXPECT_EQ(back.to_json(), text);
}

TEST(CategoryMap, CatalogLoads) {
    auto tree = load_tree(slurp(MOEVD_DATA_DIR "/taxonomy/cwe_catalog.tsv"));
    EXPECT_EQ(tree.top_level_of(id("CWE-787")), std::set<CweId>{id("CWE-664")});
    EXPECT_EQ(tree.top_level_of(id("CWE-78")), std::set<CweId>{id("CWE-707")});
    EXPECT_EQ(tree.top_level_of(id("CWE-835")), std::set<CweId>{id("CWE-691")});
}
