#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "moevd/fixtures.hpp"

using namespace moevd;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

// The bundled corpora are exactly what the generator produces.
TEST(Fixtures, BundledFilesMatchGenerator) {
    for (const auto& spec : {fixtures::separable12_spec(), fixtures::confusable4_spec()}) {
        auto fx = fixtures::generate(spec);
        EXPECT_EQ(fx.jsonl(), slurp(MOEVD_DATA_DIR "/fixtures/" + fx.name + ".jsonl")) << fx.name;
        EXPECT_EQ(fx.taxonomy, slurp(MOEVD_DATA_DIR "/fixtures/" + fx.name + "_taxonomy.tsv")) << fx.name;
    }
}

TEST(Fixtures, Separable12Shape) {
    auto fx = fixtures::generate(fixtures::separable12_spec());
    EXPECT_GE(fx.samples.size(), 2300u);
    EXPECT_LE(fx.samples.size(), 2600u);
    auto parsed = corpus::ingest(fx.jsonl());
    EXPECT_EQ(parsed.size(), fx.samples.size());
}

TEST(Fixtures, Deterministic) {
    auto a = fixtures::generate(fixtures::confusable4_spec());
    auto b = fixtures::generate(fixtures::confusable4_spec());
    EXPECT_EQ(a.jsonl(), b.jsonl());
}
