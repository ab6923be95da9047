#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "moevd/corpus.hpp"
#include "moevd/features.hpp"
#include "moevd/learn.hpp"
#include "moevd/moe.hpp"

namespace moevd::cli {

namespace fs = std::filesystem;

/// Everything a command needs. Precedence: defaults, then the JSON config
/// file, then MOEVD_OUT for the output directory, then command-line flags.
struct RunConfig {
    fs::path dataset;
    fs::path taxonomy;
    fs::path out = "moevd-run";
    std::optional<fs::path> split_file;
    std::optional<fs::path> bundle;  // default: <out>/bundle
    std::optional<fs::path> input;   // predict / evaluate input file
    std::optional<std::string> code; // predict a single function
    std::optional<fs::path> output;  // predict output, default stdout

    std::uint64_t seed = 42;
    std::size_t min_instances = 100;
    bool fallback_to_agg = true;
    std::size_t k = 2;
    double threshold = 0.5;
    moe::CombineMode combine = moe::CombineMode::probability_softmax;
    features::EncoderConfig encoder;
    learn::ModelKind model_kind = learn::ModelKind::linear;
    std::size_t hidden_dim = 64;
    double focal_gamma = 1.0;
    learn::TrainConfig expert;
    learn::TrainConfig router;
    corpus::NegativeMode mode = corpus::NegativeMode::all_negatives;
    std::size_t workers = 1;
    std::vector<std::string> variants;
    bool ideal_routing = false;
    std::size_t gradcheck_seeds = 20;

    /// Flat JSON; unknown keys are a ConfigError.
    static RunConfig from_json(std::string_view text);
    static RunConfig from_json(std::string_view text, RunConfig base);
    std::string to_json() const;

    fs::path bundle_dir() const { return bundle.value_or(out / "bundle"); }
    moe::TrainPlan plan() const;
};

/// Each command returns a process exit code: 0 success, 1 internal error,
/// 2 usage or configuration error. Errors are reported on `err`.
int cmd_prepare(const RunConfig& cfg, std::ostream& log, std::ostream& err);
int cmd_train(const RunConfig& cfg, std::ostream& log, std::ostream& err);
int cmd_predict(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_evaluate(const RunConfig& cfg, std::ostream& log, std::ostream& err);
int cmd_ablate(const RunConfig& cfg, std::ostream& log, std::ostream& err);
int cmd_gradcheck(const RunConfig& cfg, std::ostream& log, std::ostream& err);

/// The CLI entry point (argv[0] is the program name).
int main(int argc, char** argv);

}  // namespace moevd::cli
