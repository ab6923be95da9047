#include "moevd/run.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "moevd/ablate.hpp"
#include "moevd/error.hpp"
#include "moevd/eval.hpp"
#include "moevd/model_io.hpp"
#include "moevd/rng.hpp"

namespace moevd::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string read_text(const fs::path& path, const char* what) {
    if (!fs::exists(path)) throw ConfigError(std::string(what) + " not found: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(std::string("cannot open ") + what + ": " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

// Wraps file-level parse errors with the file name.
template <typename F>
auto with_file(const fs::path& path, F&& f) {
    try {
        return f();
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    } catch (const IngestionError& e) {
        throw IngestionError(path.string() + ": " + e.what());
    }
}

int report(std::ostream& err, const std::exception& e, int code) {
    err << "error: " << e.what() << "\n";
    return code;
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        return report(err, e, 2);
    } catch (const Error& e) {
        return report(err, e, 1);
    } catch (const std::exception& e) {
        return report(err, e, 1);
    }
}

struct Prepared {
    corpus::SplitCorpus split;
    taxonomy::CategoryMap map;
};

corpus::SampleStore load_dataset(const RunConfig& cfg) {
    if (cfg.dataset.empty()) throw ConfigError("no dataset path given (--dataset or config key 'dataset')");
    const auto text = read_text(cfg.dataset, "dataset");
    return std::make_shared<const std::vector<corpus::CodeSample>>(
        with_file(cfg.dataset, [&] { return corpus::ingest(text); }));
}

// Reads what cmd_prepare wrote.
Prepared load_prepared(const RunConfig& cfg) {
    const auto split_path = cfg.out / "split.json";
    const auto map_path = cfg.out / "category_map.json";
    if (!fs::exists(split_path) || !fs::exists(map_path))
        throw ConfigError("run directory " + cfg.out.string() + " is not prepared (run 'prepare' first)");
    auto store = load_dataset(cfg);
    Prepared p{corpus::split_from_manifest(store, read_text(split_path, "split manifest")),
               taxonomy::CategoryMap::from_json(read_text(map_path, "category map"))};
    p.map.fallback_to_agg = cfg.fallback_to_agg;
    return p;
}

std::string csv_trace(const std::vector<double>& trace) {
    std::ostringstream ss;
    ss.precision(17);
    ss << "epoch,loss\n";
    for (std::size_t i = 0; i < trace.size(); ++i) ss << i + 1 << ',' << trace[i] << '\n';
    return ss.str();
}

ordered_json counts_json(const std::map<taxonomy::CweId, std::size_t>& counts) {
    ordered_json j = ordered_json::object();
    for (const auto& [id, n] : counts) j[id.str()] = n;
    return j;
}

}  // namespace

moe::TrainPlan RunConfig::plan() const {
    moe::TrainPlan p;
    p.expert = expert;
    p.router = router;
    // Model seeds always derive from the run seed.
    p.expert.seed = derive_seed(seed, 1);
    p.router.seed = derive_seed(seed, 2);
    p.kind = model_kind;
    p.hidden_dim = hidden_dim;
    p.focal_gamma = focal_gamma;
    p.mode = mode;
    p.k = k;
    p.threshold = threshold;
    p.combine = combine;
    p.workers = workers;
    return p;
}

RunConfig RunConfig::from_json(std::string_view text) { return from_json(text, RunConfig{}); }

RunConfig RunConfig::from_json(std::string_view text, RunConfig c) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    try {
        for (auto& [key, v] : j.items()) {
            if (key == "dataset") c.dataset = v.get<std::string>();
            else if (key == "taxonomy") c.taxonomy = v.get<std::string>();
            else if (key == "out") c.out = v.get<std::string>();
            else if (key == "split_file") c.split_file = v.get<std::string>();
            else if (key == "bundle") c.bundle = v.get<std::string>();
            else if (key == "input") c.input = v.get<std::string>();
            else if (key == "output") c.output = v.get<std::string>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "min_instances") c.min_instances = v.get<std::size_t>();
            else if (key == "fallback_to_agg") c.fallback_to_agg = v.get<bool>();
            else if (key == "k") c.k = v.get<std::size_t>();
            else if (key == "threshold") c.threshold = v.get<double>();
            else if (key == "combine") c.combine = moe::parse_combine_mode(v.get<std::string>());
            else if (key == "encoder") c.encoder = learn::encoder_from_json(v);
            else if (key == "dim") c.encoder.dim = v.get<std::size_t>();
            else if (key == "n_max") c.encoder.n_max = v.get<int>();
            else if (key == "hash_seed") c.encoder.hash_seed = v.get<std::uint64_t>();
            else if (key == "model_kind") c.model_kind = learn::parse_model_kind(v.get<std::string>());
            else if (key == "hidden_dim") c.hidden_dim = v.get<std::size_t>();
            else if (key == "focal_gamma") c.focal_gamma = v.get<double>();
            else if (key == "expert") c.expert = learn::train_config_from_json(v, c.expert);
            else if (key == "router") c.router = learn::train_config_from_json(v, c.router);
            else if (key == "mode") c.mode = corpus::parse_negative_mode(v.get<std::string>());
            else if (key == "workers") c.workers = v.get<std::size_t>();
            else if (key == "variants") c.variants = v.get<std::vector<std::string>>();
            else if (key == "ideal_routing") c.ideal_routing = v.get<bool>();
            else if (key == "gradcheck_seeds") c.gradcheck_seeds = v.get<std::size_t>();
            else throw ConfigError("config: unknown key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

std::string RunConfig::to_json() const {
    ordered_json j;
    j["dataset"] = dataset.string();
    j["taxonomy"] = taxonomy.string();
    j["out"] = out.string();
    if (split_file) j["split_file"] = split_file->string();
    if (bundle) j["bundle"] = bundle->string();
    if (input) j["input"] = input->string();
    if (output) j["output"] = output->string();
    j["seed"] = seed;
    j["min_instances"] = min_instances;
    j["fallback_to_agg"] = fallback_to_agg;
    j["k"] = k;
    j["threshold"] = threshold;
    j["combine"] = moe::to_string(combine);
    j["encoder"] = learn::encoder_to_json(encoder);
    j["model_kind"] = learn::to_string(model_kind);
    j["hidden_dim"] = hidden_dim;
    j["focal_gamma"] = focal_gamma;
    j["expert"] = learn::train_config_to_json(expert);
    j["router"] = learn::train_config_to_json(router);
    j["mode"] = corpus::to_string(mode);
    j["workers"] = workers;
    j["variants"] = variants;
    j["ideal_routing"] = ideal_routing;
    j["gradcheck_seeds"] = gradcheck_seeds;
    return j.dump(2) + "\n";
}

int cmd_prepare(const RunConfig& cfg, std::ostream& log, std::ostream& err) {
    return guarded(err, [&] {
        if (cfg.taxonomy.empty()) throw ConfigError("no taxonomy path given (--taxonomy or config key 'taxonomy')");
        auto store = load_dataset(cfg);
        const auto tax_text = read_text(cfg.taxonomy, "taxonomy");
        const auto tree = with_file(cfg.taxonomy, [&] { return taxonomy::load_tree(tax_text); });

        auto split = cfg.split_file
                         ? corpus::split_from_manifest(store, read_text(*cfg.split_file, "split file"))
                         : corpus::split(store, cfg.seed);
        const auto train_counts = corpus::vulnerable_counts(split, split.train);
        auto map = taxonomy::build_categories(tree, train_counts, cfg.min_instances);
        map.fallback_to_agg = cfg.fallback_to_agg;

        std::vector<std::size_t> all(store->size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        const auto all_counts = corpus::vulnerable_counts(split, all);
        const auto partition = corpus::head_tail(all_counts);

        ordered_json summary;
        summary["samples"] = store->size();
        std::size_t vul = 0;
        for (const auto& s : *store) vul += s.vulnerable() ? 1 : 0;
        summary["vulnerable"] = vul;
        summary["split_sizes"] = {{"train", split.train.size()}, {"valid", split.valid.size()}, {"test", split.test.size()}};
        summary["categories"] = map.categories;
        summary["agg_members"] = json::array();
        for (const auto& id : map.agg_members) summary["agg_members"].push_back(id.str());
        summary["per_cwe_all"] = counts_json(all_counts);
        summary["per_cwe_train"] = counts_json(train_counts);
        summary["per_cwe_test"] = counts_json(corpus::vulnerable_counts(split, split.test));
        std::vector<std::string> head, tail;
        for (const auto& id : partition.head) head.push_back(id.str());
        for (const auto& id : partition.tail) tail.push_back(id.str());
        summary["head"] = head;
        summary["tail"] = tail;
        summary["head_fraction"] = partition.head_fraction;

        write_text(cfg.out / "split.json", split.manifest_json());
        write_text(cfg.out / "category_map.json", map.to_json());
        write_text(cfg.out / "summary.json", summary.dump(2) + "\n");
        write_text(cfg.out / "config.prepare.json", cfg.to_json());
        log << "prepared " << store->size() << " samples: " << map.categories.size() << " categories, train/valid/test "
            << split.train.size() << "/" << split.valid.size() << "/" << split.test.size() << " -> " << cfg.out.string()
            << "\n";
        return 0;
    });
}

int cmd_train(const RunConfig& cfg, std::ostream& log, std::ostream& err) {
    return guarded(err, [&] {
        auto prepared = load_prepared(cfg);
        using clock = std::chrono::steady_clock;
        const auto t0 = clock::now();
        const auto encoded = moe::encode_store(*prepared.split.store, cfg.encoder, cfg.workers);
        const auto t1 = clock::now();
        const auto moe_model = moe::train_all(prepared.split, prepared.map, encoded, cfg.plan());
        const auto t2 = clock::now();

        moe::save_bundle(moe_model, cfg.bundle_dir());
        for (std::size_t i = 0; i < moe_model.roster().size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "expert_%02zu.csv", i);
            write_text(cfg.out / "traces" / name, csv_trace(moe_model.expert(moe_model.roster()[i]).loss_trace));
        }
        write_text(cfg.out / "traces" / "router.csv", csv_trace(moe_model.router.loss_trace));
        write_text(cfg.out / "config.train.json", cfg.to_json());

        auto secs = [](auto a, auto b) { return std::chrono::duration<double>(b - a).count(); };
        std::ostringstream timing;
        timing << "encode_seconds " << secs(t0, t1) << "\n";
        for (const auto& c : moe_model.roster())
            timing << "expert " << c << " seconds " << moe_model.expert(c).train_seconds << "\n";
        timing << "router seconds " << moe_model.router.train_seconds << "\n";
        timing << "train_all_wall_seconds " << secs(t1, t2) << " workers " << cfg.workers << "\n";
        write_text(cfg.out / "train_log.txt", timing.str());
        log << timing.str();
        log << "trained " << moe_model.roster().size() << " experts + router (" << corpus::to_string(cfg.mode)
            << ") -> " << cfg.bundle_dir().string() << "\n";
        return 0;
    });
}

int cmd_predict(const RunConfig& cfg, std::ostream& out_default, std::ostream& err) {
    return guarded(err, [&] {
        if (!cfg.input && !cfg.code) throw ConfigError("predict needs --input <file> or --code <function>");
        auto moe_model = moe::load_bundle(cfg.bundle_dir());
        moe_model.category_map.fallback_to_agg = cfg.fallback_to_agg;
        const std::optional<std::size_t> k = cfg.k == moe_model.k ? std::nullopt : std::optional(cfg.k);
        if (k && (*k < 1 || *k > moe_model.roster().size()))
            throw ConfigError("--k must be in 1.." + std::to_string(moe_model.roster().size()));
        moe_model.threshold = cfg.threshold;
        moe_model.combine = cfg.combine;
        const features::HashedNgramEncoder encoder(moe_model.encoder);

        std::ofstream file_out;
        std::ostream* out = &out_default;
        if (cfg.output && cfg.output->string() != "-") {
            if (cfg.output->has_parent_path()) fs::create_directories(cfg.output->parent_path());
            file_out.open(*cfg.output, std::ios::binary);
            if (!file_out) throw Error("cannot write " + cfg.output->string());
            out = &file_out;
        }

        auto emit = [&](const std::string& id, std::string_view code) {
            const auto p = moe::predict(moe_model, encoder.encode(code), k);
            ordered_json j;
            j["id"] = id;
            j["p_vul"] = p.p_vul;
            j["decision"] = p.vulnerable ? "vulnerable" : "non_vulnerable";
            ordered_json sel = ordered_json::array();
            for (const auto& s : p.selected)
                sel.push_back({{"category", s.category},
                               {"router_prob", s.router_prob},
                               {"weight", s.weight},
                               {"expert_prob", s.expert_prob}});
            j["selected"] = sel;
            *out << j.dump() << "\n";
        };

        std::size_t ok = 0, failed = 0;
        if (cfg.code) {
            emit("input", *cfg.code);
            ++ok;
        } else {
            std::ifstream in(*cfg.input, std::ios::binary);
            if (!in) throw ConfigError("input file not found: " + cfg.input->string());
            std::string line;
            std::size_t line_no = 0;
            while (std::getline(in, line)) {
                ++line_no;
                if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
                try {
                    const auto j = json::parse(line);
                    if (!j.is_object() || !j.contains("func") || !j["func"].is_string())
                        throw ParseError("record needs a string 'func'");
                    std::string id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>()
                                                                             : "line-" + std::to_string(line_no);
                    emit(id, j["func"].get<std::string>());
                    ++ok;
                } catch (const std::exception& e) {
                    ordered_json rec;
                    rec["line"] = line_no;
                    rec["error"] = e.what();
                    *out << rec.dump() << "\n";
                    ++failed;
                }
            }
        }
        err << "predicted " << ok << " function(s), " << failed << " malformed line(s)\n";
        return 0;
    });
}

namespace {

int evaluate_impl(RunConfig cfg, std::ostream& log, std::ostream& err, bool default_all_variants) {
    return guarded(err, [&] {
        auto moe_model = moe::load_bundle(cfg.bundle_dir());
        moe_model.category_map.fallback_to_agg = cfg.fallback_to_agg;
        if (cfg.k < 1 || cfg.k > moe_model.roster().size())
            throw ConfigError("--k must be in 1.." + std::to_string(moe_model.roster().size()));
        moe_model.k = cfg.k;
        moe_model.threshold = cfg.threshold;
        moe_model.combine = cfg.combine;
        if (moe_model.encoder != cfg.encoder)
            log << "note: using the bundle's encoder configuration\n";

        corpus::SplitCorpus split;
        std::vector<std::size_t> test;
        if (cfg.input) {
            // An explicit labelled test file; training-dependent variants still need the prepared split.
            const auto text = read_text(*cfg.input, "test set");
            std::istringstream lines(text);
            std::string line;
            while (std::getline(lines, line)) {
                if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
                auto j = json::parse(line, nullptr, false);
                if (j.is_object() && !j.contains("target"))
                    throw ConfigError("test set " + cfg.input->string() + " is unlabeled (missing 'target')");
            }
            auto store = std::make_shared<const std::vector<corpus::CodeSample>>(
                with_file(*cfg.input, [&] { return corpus::ingest(text); }));
            split.store = store;
            for (std::size_t i = 0; i < store->size(); ++i) split.test.push_back(i);
            test = split.test;
        } else {
            auto prepared = load_prepared(cfg);
            split = std::move(prepared.split);
            test = split.test;
        }
        const auto encoded = moe::encode_store(*split.store, moe_model.encoder, cfg.workers);

        std::vector<std::size_t> all(split.store->size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        const auto partition = corpus::head_tail(corpus::vulnerable_counts(split, all));
        auto report = eval::evaluate(moe_model, split, test, encoded, partition, cfg.ideal_routing);

        auto variants = cfg.variants;
        if (variants.empty() && default_all_variants)
            variants = {"random-router", "stack-ensemble", "one-for-all", "nonvuln-negatives"};
        if (!variants.empty()) {
            if (split.train.empty() && cfg.input) {
                auto prepared = load_prepared(cfg);
                // Variants that train need the prepared training split; evaluate them on its test split.
                split = std::move(prepared.split);
                test = split.test;
            }
            const auto enc = split.store->size() == encoded.rows.size() && !cfg.input
                                 ? encoded
                                 : moe::encode_store(*split.store, moe_model.encoder, cfg.workers);
            for (const auto& name : variants) {
                ablate::VariantSpec spec;
                spec.kind = ablate::parse_variant_kind(name);
                spec.seed = derive_seed(cfg.seed, 0x7A11);
                spec.meta_config = cfg.plan().expert;
                report.variants.push_back(ablate::run_variant(spec, moe_model, split, test, enc, cfg.plan()));
            }
        }

        const auto dir = cfg.out / "report";
        write_text(dir / "report.json", report.to_json());
        report.write_csv(dir);
        write_text(cfg.out / (default_all_variants ? "config.ablate.json" : "config.evaluate.json"), cfg.to_json());
        log << "overall P/R/F1 " << report.overall.precision << " / " << report.overall.recall << " / "
            << report.overall.f1 << "; routing correct " << report.routing.correct_fraction << " at k=" << cfg.k
            << "\n";
        if (report.ideal_routing) log << "ideal-routing F1 " << report.ideal_routing->f1 << "\n";
        for (const auto& v : report.variants) log << "variant " << v.variant << " F1 " << v.metrics.f1 << "\n";
        log << "report -> " << dir.string() << "\n";
        return 0;
    });
}

}  // namespace

int cmd_evaluate(const RunConfig& cfg, std::ostream& log, std::ostream& err) {
    return evaluate_impl(cfg, log, err, false);
}

int cmd_ablate(const RunConfig& cfg, std::ostream& log, std::ostream& err) { return evaluate_impl(cfg, log, err, true); }

int cmd_gradcheck(const RunConfig& cfg, std::ostream& log, std::ostream& err) {
    return guarded(err, [&] {
        bool all_pass = true;
        double worst = 0.0;
        for (auto kind : {learn::ModelKind::linear, learn::ModelKind::mlp1}) {
            for (auto loss : {learn::LossKind::binary_ce, learn::LossKind::focal}) {
                double kind_worst = 0.0;
                bool pass = true;
                for (std::size_t s = 0; s < cfg.gradcheck_seeds; ++s) {
                    const std::uint64_t seed = derive_seed(cfg.seed, s);
                    Rng rng(seed);
                    const std::size_t in = 64, classes = loss == learn::LossKind::focal ? 4 : 1;
                    auto model = kind == learn::ModelKind::linear ? learn::Model::linear(in, classes)
                                                                  : learn::Model::mlp1(in, 16, classes, seed);
                    for (auto& w : model.w1) w = 0.5 * rng.normal();
                    for (auto& b : model.b1) b = 0.1 * rng.normal();
                    for (auto& b : model.b2) b = 0.1 * rng.normal();

                    std::vector<std::vector<features::Entry>> rows(16);
                    std::vector<learn::Example> batch;
                    for (auto& r : rows) {
                        std::vector<std::string> toks;
                        for (int t = 0; t < 12; ++t) toks.push_back("t" + std::to_string(rng.below(40)));
                        r = features::featurize(toks, in, 2, seed).entries;
                    }
                    for (auto& r : rows) batch.push_back({{in, r}, static_cast<int>(rng.below(std::max<std::size_t>(classes, 2)))});
                    learn::LossSpec spec = loss == learn::LossKind::focal
                                               ? learn::LossSpec::focal(1.0 + rng.uniform(), {1.0, 2.0, 0.5, 4.0})
                                               : learn::LossSpec::binary();
                    learn::GradCheckOptions opts;
                    opts.seed = seed;
                    const auto rep = learn::finite_diff_check(model, batch, spec, opts);
                    pass = pass && rep.pass;
                    kind_worst = std::max(kind_worst, rep.max_rel_error);
                    for (const auto& f : rep.failures) err << "  " << f << "\n";
                }
                log << (pass ? "PASS " : "FAIL ") << learn::to_string(kind) << " / " << learn::to_string(loss)
                    << ": max relative error " << kind_worst << " over " << cfg.gradcheck_seeds << " seeds\n";
                all_pass = all_pass && pass;
                worst = std::max(worst, kind_worst);
            }
        }
        log << (all_pass ? "gradcheck passed" : "gradcheck FAILED") << " (worst " << worst << ")\n";
        return all_pass ? 0 : 1;
    });
}

int main(int argc, char** argv) {
    CLI::App app{"Mixture-of-experts vulnerability detection: prepare, train, predict, evaluate, ablate, gradcheck"};
    app.require_subcommand(1);

    std::string config_path, dataset, taxonomy_path, out_dir, split_file, bundle, input, code, output, mode, combine;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> k, min_instances, workers;
    std::optional<double> threshold;
    std::vector<std::string> variants;
    bool ideal = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "flat JSON run configuration");
        sub->add_option("--out", out_dir, "run directory (MOEVD_OUT also sets it)");
        sub->add_option("--seed", seed, "random seed");
        sub->add_option("--workers", workers, "threads for encoding and expert training");
    };

    auto* prepare = app.add_subcommand("prepare", "split the dataset and build the CWE category map");
    auto* train = app.add_subcommand("train", "train the experts and the router");
    auto* predict = app.add_subcommand("predict", "score functions with a trained bundle");
    auto* evaluate = app.add_subcommand("evaluate", "write the evaluation report for the test split");
    auto* ablate = app.add_subcommand("ablate", "evaluate with comparison variants");
    auto* gradcheck = app.add_subcommand("gradcheck", "verify analytic gradients against finite differences");

    for (auto* sub : {prepare, train, predict, evaluate, ablate, gradcheck}) add_common(sub);
    for (auto* sub : {prepare, train, evaluate, ablate}) sub->add_option("--dataset", dataset, "JSON-lines dataset");
    prepare->add_option("--taxonomy", taxonomy_path, "CWE edge-list file");
    prepare->add_option("--split-file", split_file, "fixed train/valid/test id lists");
    prepare->add_option("--min-instances", min_instances, "category size threshold for CWE-agg folding");
    train->add_option("--mode", mode, "all-negatives | nonvuln-only-negatives");
    for (auto* sub : {predict, evaluate, ablate}) {
        sub->add_option("--bundle", bundle, "bundle directory (default <out>/bundle)");
        sub->add_option("--k", k, "number of experts per input");
        sub->add_option("--threshold", threshold, "decision threshold on p_vul");
    }
    train->add_option("--k", k, "default k recorded in the bundle");
    train->add_option("--threshold", threshold, "decision threshold recorded in the bundle");
    for (auto* sub : {train, predict, evaluate, ablate})
        sub->add_option("--combine", combine, "combiner weights: probability | logit");
    predict->add_option("--input", input, "JSON-lines file with 'id' and 'func'");
    predict->add_option("--code", code, "a single function's source");
    predict->add_option("--output", output, "output JSONL path (default stdout)");
    for (auto* sub : {evaluate, ablate}) {
        sub->add_option("--test", input, "labelled JSON-lines test file (default: prepared test split)");
        sub->add_option("--variants", variants, "random-router, stack-ensemble, one-for-all, nonvuln-negatives")
            ->delimiter(',');
        sub->add_flag("--ideal-routing", ideal, "add the oracle-routing upper bound");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    return guarded(std::cerr, [&] {
        RunConfig cfg;
        if (!config_path.empty()) {
            cfg = RunConfig::from_json(read_text(config_path, "config file"));
            // Relative input paths in a config file are relative to that file.
            const auto base = fs::path(config_path).parent_path();
            auto rebase = [&](fs::path& p) {
                if (!p.empty() && p.is_relative()) p = base / p;
            };
            rebase(cfg.dataset);
            rebase(cfg.taxonomy);
            if (cfg.split_file) rebase(*cfg.split_file);
        }
        if (const char* env = std::getenv("MOEVD_OUT"); env && *env) cfg.out = env;
        if (!out_dir.empty()) cfg.out = out_dir;
        if (!dataset.empty()) cfg.dataset = dataset;
        if (!taxonomy_path.empty()) cfg.taxonomy = taxonomy_path;
        if (!split_file.empty()) cfg.split_file = split_file;
        if (!bundle.empty()) cfg.bundle = bundle;
        if (!input.empty()) cfg.input = input;
        if (!code.empty() || predict->count("--code")) cfg.code = code;
        if (!output.empty()) cfg.output = output;
        if (!mode.empty()) cfg.mode = corpus::parse_negative_mode(mode);
        if (!combine.empty()) cfg.combine = moe::parse_combine_mode(combine);
        if (seed) cfg.seed = *seed;
        if (k) cfg.k = *k;
        if (min_instances) cfg.min_instances = *min_instances;
        if (workers) cfg.workers = *workers;
        if (threshold) cfg.threshold = *threshold;
        if (!variants.empty()) cfg.variants = variants;
        if (ideal) cfg.ideal_routing = true;

        if (*prepare) return cmd_prepare(cfg, std::cout, std::cerr);
        if (*train) return cmd_train(cfg, std::cout, std::cerr);
        if (*predict) return cmd_predict(cfg, std::cout, std::cerr);
        if (*evaluate) return cmd_evaluate(cfg, std::cout, std::cerr);
        if (*ablate) return cmd_ablate(cfg, std::cout, std::cerr);
        return cmd_gradcheck(cfg, std::cout, std::cerr);
    });
}

}  // namespace moevd::cli
