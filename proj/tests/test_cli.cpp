#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "moevd/run.hpp"

namespace fs = std::filesystem;
using namespace moevd;

namespace {

int run(std::vector<std::string> args) {
    args.insert(args.begin(), "moevd");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return cli::main(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// A small two-domain corpus written next to a config file.
fs::path small_run(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("moevd_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "tree.tsv") << "CWE-1\nCWE-2\n";
    std::ofstream data(dir / "data.jsonl");
    for (int i = 0; i < 120; ++i) {
        const bool vul = i % 3 != 0;
        const int cat = i % 2;
        nlohmann::json j;
        j["id"] = "s" + std::to_string(i);
        j["func"] = std::string(cat ? "int alpha_" : "int beta_") + std::to_string(i % 7) + "(void) { " +
                    (vul ? (cat ? "strcpy(buf, src);" : "free(ptr);") : "return 0;") + " }";
        j["target"] = vul ? 1 : 0;
        if (vul) j["cwe"] = cat ? "CWE-1" : "CWE-2";
        data << j.dump() << "\n";
    }
    data.close();
    std::ofstream(dir / "config.json") << R"({"dataset": "data.jsonl", "taxonomy": "tree.tsv", "min_instances": 1,
        "dim": 4096, "expert": {"learning_rate": 0.05}, "router": {"learning_rate": 0.05}})";
    return dir;
}

}  // namespace

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run({}), 2);
    EXPECT_EQ(run({"frobnicate"}), 2);
    EXPECT_EQ(run({"prepare", "--dataset", "/nonexistent/data.jsonl", "--taxonomy", "/nonexistent/t.tsv"}), 2);
    EXPECT_EQ(run({"prepare", "--config", "/nonexistent/config.json"}), 2);
    const auto dir = small_run("bad_config");
    std::ofstream(dir / "bad.json") << R"({"dataset": "data.jsonl", "colour": "red"})";
    EXPECT_EQ(run({"prepare", "--config", (dir / "bad.json").string(), "--out", (dir / "out").string()}), 2);
}

TEST(Cli, MissingPathIsNamed) {
    auto cfg = cli::RunConfig{};
    cfg.dataset = "/nonexistent/data.jsonl";
    cfg.taxonomy = "/nonexistent/t.tsv";
    std::ostringstream out, err;
    EXPECT_EQ(cli::cmd_prepare(cfg, out, err), 2);
    EXPECT_NE(err.str().find("/nonexistent/"), std::string::npos);
}

TEST(Cli, ConfigJsonRoundTrip) {
    cli::RunConfig c;
    c.seed = 5;
    c.k = 3;
    c.mode = corpus::NegativeMode::nonvuln_only_negatives;
    c.expert.learning_rate = 0.02;
    c.variants = {"random-router"};
    auto back = cli::RunConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(Cli, FullPipeline) {
    const auto dir = small_run("pipeline");
    const auto cfg = (dir / "config.json").string();
    const auto out = (dir / "out").string();
    ASSERT_EQ(run({"prepare", "--config", cfg, "--out", out, "--seed", "3"}), 0);
    const auto manifest = slurp(dir / "out" / "split.json");
    ASSERT_EQ(run({"prepare", "--config", cfg, "--out", out, "--seed", "3"}), 0);
    EXPECT_EQ(slurp(dir / "out" / "split.json"), manifest);
    EXPECT_TRUE(fs::exists(dir / "out" / "summary.json"));

    ASSERT_EQ(run({"train", "--config", cfg, "--out", out, "--seed", "3", "--mode", "nonvuln-only-negatives"}), 0);
    auto m = nlohmann::json::parse(slurp(dir / "out" / "bundle" / "manifest.json"));
    EXPECT_EQ(m["training_mode"], "nonvuln-only-negatives");
    EXPECT_TRUE(fs::exists(dir / "out" / "traces" / "router.csv"));
    EXPECT_TRUE(fs::exists(dir / "out" / "train_log.txt"));

    // Predict: one good line, one malformed line, one empty body.
    std::ofstream(dir / "in.jsonl") << "{\"id\":\"x\",\"func\":\"int alpha_1(void) { strcpy(buf, src); }\"}\n"
                                    << "{oops\n"
                                    << "{\"id\":\"e\",\"func\":\"\"}\n";
    const auto pred = (dir / "pred.jsonl").string();
    ASSERT_EQ(run({"predict", "--config", cfg, "--out", out, "--input", (dir / "in.jsonl").string(), "--output", pred}), 0);
    std::istringstream lines(slurp(pred));
    std::string line;
    std::vector<nlohmann::json> recs;
    while (std::getline(lines, line)) recs.push_back(nlohmann::json::parse(line));
    ASSERT_EQ(recs.size(), 3u);
    EXPECT_EQ(recs[0]["id"], "x");
    EXPECT_EQ(recs[0]["selected"].size(), 2u);
    EXPECT_TRUE(recs[1].contains("error"));
    EXPECT_EQ(recs[1]["line"], 2);
    EXPECT_EQ(recs[2]["id"], "e");

    // k override changes only the selected-list length and keeps the prefix.
    const auto pred1 = (dir / "pred1.jsonl").string();
    ASSERT_EQ(run({"predict", "--config", cfg, "--out", out, "--input", (dir / "in.jsonl").string(), "--output", pred1,
                   "--k", "1"}),
              0);
    auto first = nlohmann::json::parse(slurp(pred1).substr(0, slurp(pred1).find('\n')));
    EXPECT_EQ(first["selected"].size(), 1u);
    EXPECT_EQ(first["selected"][0]["category"], recs[0]["selected"][0]["category"]);
    EXPECT_EQ(run({"predict", "--config", cfg, "--out", out, "--code", "int f(){}", "--k", "3"}), 2);

    ASSERT_EQ(run({"evaluate", "--config", cfg, "--out", out, "--variants", "random-router", "--ideal-routing"}), 0);
    auto rep = nlohmann::json::parse(slurp(dir / "out" / "report" / "report.json"));
    for (const char* key : {"overall", "per_cwe", "head_tail", "routing", "expert_matrix", "ideal_routing", "variants"})
        EXPECT_TRUE(rep.contains(key)) << key;
    EXPECT_EQ(rep["variants"].size(), 1u);

    ASSERT_EQ(run({"ablate", "--config", cfg, "--out", out}), 0);
    rep = nlohmann::json::parse(slurp(dir / "out" / "report" / "report.json"));
    EXPECT_EQ(rep["variants"].size(), 4u);

    // An unlabeled test file is a usage error.
    std::ofstream(dir / "unlabeled.jsonl") << "{\"id\":\"u\",\"func\":\"int f(){}\"}\n";
    EXPECT_EQ(run({"evaluate", "--config", cfg, "--out", out, "--test", (dir / "unlabeled.jsonl").string()}), 2);
}

TEST(Cli, EnvOverridesOutput) {
    const auto dir = small_run("env");
    setenv("MOEVD_OUT", (dir / "from_env").c_str(), 1);
    EXPECT_EQ(run({"prepare", "--config", (dir / "config.json").string()}), 0);
    unsetenv("MOEVD_OUT");
    EXPECT_TRUE(fs::exists(dir / "from_env" / "split.json"));
}

TEST(Cli, Gradcheck) {
    cli::RunConfig c;
    c.gradcheck_seeds = 2;
    std::ostringstream out, err;
    EXPECT_EQ(cli::cmd_gradcheck(c, out, err), 0) << err.str();
    EXPECT_NE(out.str().find("gradcheck passed"), std::string::npos);
}
