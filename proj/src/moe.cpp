#include "moevd/moe.hpp"

#include <algorithm>
#include <chrono>
#include <atomic>
#include <cstdio>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "moevd/error.hpp"
#include "moevd/model_io.hpp"
#include "moevd/rng.hpp"

namespace moevd::moe {

namespace fs = std::filesystem;

std::string to_string(CombineMode m) { return m == CombineMode::probability_softmax ? "probability" : "logit"; }

CombineMode parse_combine_mode(std::string_view s) {
    if (s == "probability") return CombineMode::probability_softmax;
    if (s == "logit") return CombineMode::logit_softmax;
    throw ConfigError("unknown combine mode '" + std::string(s) + "'");
}

namespace {

// Runs jobs [0, n) on up to `workers` threads; rethrows the exception of the
// lowest-numbered failing job.
void run_parallel(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& job) {
    std::vector<std::exception_ptr> errors(n);
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                job(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        job(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::vector<learn::Example> examples_for(const std::vector<corpus::LabeledIndex>& samples, const EncodedStore& encoded) {
    std::vector<learn::Example> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back({encoded[s.index].row(), s.target});
    return out;
}

learn::Model fresh_model(const TrainPlan& plan, std::size_t input_dim, std::size_t out_dim, std::uint64_t seed) {
    if (plan.kind == learn::ModelKind::linear) return learn::Model::linear(input_dim, out_dim);
    return learn::Model::mlp1(input_dim, plan.hidden_dim, out_dim, seed);
}

}  // namespace

EncodedStore encode_store(const std::vector<corpus::CodeSample>& samples, const features::EncoderConfig& cfg,
                          std::size_t workers) {
    const features::HashedNgramEncoder encoder(cfg);
    EncodedStore out;
    out.encoder = cfg;
    out.rows.resize(samples.size());
    const std::size_t chunk = 256;
    const std::size_t n_chunks = (samples.size() + chunk - 1) / chunk;
    run_parallel(n_chunks, workers, [&](std::size_t c) {
        const std::size_t end = std::min(samples.size(), (c + 1) * chunk);
        for (std::size_t i = c * chunk; i < end; ++i) out.rows[i] = encoder.encode(samples[i].code);
    });
    return out;
}

const ExpertModel& MoEModel::expert(const CategoryId& c) const {
    auto it = experts.find(c);
    if (it == experts.end()) throw LookupError("no expert for category " + c, c);
    return it->second;
}

void MoEModel::validate() const {
    if (router.roster.empty()) throw ConfigError("moe: empty roster");
    if (router.model.out_dim != router.roster.size())
        throw ConfigError("moe: router output size does not match roster");
    for (const auto& c : router.roster)
        if (!experts.count(c)) throw ConfigError("moe: no expert for roster category " + c);
    if (k < 1 || k > router.roster.size())
        throw ConfigError("moe: k must be in 1.." + std::to_string(router.roster.size()) + ", got " + std::to_string(k));
}

ExpertModel train_expert(const corpus::SplitCorpus& split, const CategoryMap& map, const EncodedStore& encoded,
                         const CategoryId& category, const TrainPlan& plan) {
    const std::size_t pos = map.index_of(category);
    learn::TrainConfig cfg = plan.expert;
    cfg.seed = derive_seed(plan.expert.seed, pos + 1);
    cfg.loss = learn::LossSpec::binary();

    auto view = corpus::expert_view(split, map, category, plan.mode, derive_seed(cfg.seed, 0xE));
    auto data = examples_for(view.samples, encoded);
    ExpertModel out;
    out.category = category;
    out.training_mode = plan.mode;
    out.train = cfg;
    try {
        const auto t0 = std::chrono::steady_clock::now();
        auto result = learn::train(fresh_model(plan, encoded.encoder.dim, 1, cfg.seed), data, cfg);
        out.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.model = std::move(result.model);
        out.loss_trace = std::move(result.epoch_loss);
    } catch (const Error& e) {
        throw TrainingError("expert " + category + ": " + e.what());
    }
    return out;
}

RouterModel train_router(const corpus::SplitCorpus& split, const CategoryMap& map, const EncodedStore& encoded,
                         const TrainPlan& plan) {
    learn::TrainConfig cfg = plan.router;
    auto view = corpus::router_view(split, map, derive_seed(cfg.seed, 0xA));
    cfg.loss = learn::LossSpec::focal(plan.focal_gamma, view.class_weights);
    auto data = examples_for(view.samples, encoded);
    RouterModel out;
    out.roster = view.roster;
    out.train = cfg;
    try {
        const auto t0 = std::chrono::steady_clock::now();
        auto result = learn::train(fresh_model(plan, encoded.encoder.dim, view.roster.size(), cfg.seed), data, cfg);
        out.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.model = std::move(result.model);
        out.loss_trace = std::move(result.epoch_loss);
    } catch (const Error& e) {
        throw TrainingError(std::string("router: ") + e.what());
    }
    return out;
}

MoEModel train_all(const corpus::SplitCorpus& split, const CategoryMap& map, const EncodedStore& encoded,
                   const TrainPlan& plan) {
    if (map.categories.empty()) throw ConfigError("train_all: empty roster");
    if (encoded.rows.size() != split.store->size()) throw ConfigError("train_all: encoded store does not match samples");
    if (map.categories.size() < 2)
        throw ConfigError("train_all: the router needs at least two categories");

    // Fail early, naming the category, before any model is trained.
    for (const auto& c : map.categories) (void)corpus::expert_view(split, map, c, plan.mode, 0);

    const std::size_t n = map.categories.size();
    std::vector<ExpertModel> experts(n);
    RouterModel router;
    run_parallel(n + 1, plan.workers, [&](std::size_t i) {
        if (i == n)
            router = train_router(split, map, encoded, plan);
        else
            experts[i] = train_expert(split, map, encoded, map.categories[i], plan);
    });

    MoEModel moe;
    moe.router = std::move(router);
    for (auto& e : experts) {
        auto cat = e.category;
        moe.experts.emplace(std::move(cat), std::move(e));
    }
    moe.k = std::min(plan.k, n);
    moe.threshold = plan.threshold;
    moe.combine = plan.combine;
    moe.training_mode = plan.mode;
    moe.category_map = map;
    moe.encoder = encoded.encoder;
    moe.validate();
    return moe;
}

std::vector<RankedCategory> route(const MoEModel& moe, const FeatureVector& x) {
    const auto z = learn::logits(moe.router.model, x.row());
    const auto p = learn::forward(moe.router.model, x.row());
    std::vector<RankedCategory> ranked;
    ranked.reserve(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) ranked.push_back({moe.router.roster[i], p[i], z[i], i});
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const RankedCategory& a, const RankedCategory& b) { return a.probability > b.probability; });
    return ranked;
}

std::vector<RankedCategory> route(const MoEModel& moe, std::string_view code) {
    return route(moe, features::HashedNgramEncoder(moe.encoder).encode(code));
}

RoutedPrediction combine(std::span<const RankedCategory> ranked, std::span<const double> expert_probs, std::size_t k,
                         CombineMode mode) {
    if (k < 1 || k > ranked.size()) throw ConfigError("combine: k out of range");
    if (expert_probs.size() < k) throw ShapeError("combine: missing expert probabilities");

    std::vector<double> score(k);
    for (std::size_t i = 0; i < k; ++i)
        score[i] = mode == CombineMode::probability_softmax ? ranked[i].probability : ranked[i].logit;
    const double mx = *std::max_element(score.begin(), score.end());
    double sum = 0.0;
    for (auto& s : score) {
        s = std::exp(s - mx);
        sum += s;
    }

    RoutedPrediction out;
    out.selected.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        const double w = score[i] / sum;
        out.selected.push_back({ranked[i].category, ranked[i].probability, w, expert_probs[i]});
        out.p_vul += w * expert_probs[i];
    }
    return out;
}

double expert_probability(const ExpertModel& expert, const FeatureVector& x) {
    return learn::forward(expert.model, x.row())[0];
}

RoutedPrediction predict_with(const MoEModel& moe, const FeatureVector& x, std::size_t k, const ExpertEvaluator& eval) {
    if (k < 1 || k > moe.roster().size())
        throw ConfigError("k must be in 1.." + std::to_string(moe.roster().size()) + ", got " + std::to_string(k));
    const auto ranked = route(moe, x);
    std::vector<double> probs(k);
    for (std::size_t i = 0; i < k; ++i) probs[i] = eval(ranked[i].category, x);
    auto out = combine(ranked, probs, k, moe.combine);
    out.vulnerable = out.p_vul >= moe.threshold;
    return out;
}

RoutedPrediction predict(const MoEModel& moe, const FeatureVector& x, std::optional<std::size_t> k) {
    return predict_with(moe, x, k.value_or(moe.k), [&](const CategoryId& c, const FeatureVector& v) {
        return expert_probability(moe.expert(c), v);
    });
}

RoutedPrediction predict(const MoEModel& moe, std::string_view code, std::optional<std::size_t> k) {
    return predict(moe, features::HashedNgramEncoder(moe.encoder).encode(code), k);
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string expert_file_name(std::size_t pos) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "expert_%02zu.json", pos);
    return buf;
}

}  // namespace

void save_bundle(const MoEModel& moe, const fs::path& dir) {
    moe.validate();
    fs::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["version"] = 1;
    manifest["roster"] = moe.roster();
    manifest["k"] = moe.k;
    manifest["threshold"] = moe.threshold;
    manifest["combine"] = to_string(moe.combine);
    manifest["training_mode"] = corpus::to_string(moe.training_mode);
    manifest["encoder"] = learn::encoder_to_json(moe.encoder);
    manifest["category_map"] = "category_map.json";
    manifest["router"] = "router.json";
    nlohmann::ordered_json experts = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < moe.roster().size(); ++i) {
        const auto& e = moe.expert(moe.roster()[i]);
        experts.push_back({{"category", e.category}, {"file", expert_file_name(i)}});
        write_file(dir / expert_file_name(i), learn::to_json({e.model, learn::LossSpec::binary(), e.train, moe.encoder}));
    }
    manifest["experts"] = experts;
    write_file(dir / "router.json", learn::to_json({moe.router.model, moe.router.train.loss, moe.router.train, moe.encoder}));
    write_file(dir / "category_map.json", moe.category_map.to_json());
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

MoEModel load_bundle(const fs::path& dir) {
    MoEModel moe;
    try {
        const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
        if (manifest.at("version").get<int>() != 1) throw ParseError("bundle: unsupported manifest version");
        moe.k = manifest.at("k").get<std::size_t>();
        moe.threshold = manifest.at("threshold").get<double>();
        moe.combine = parse_combine_mode(manifest.value("combine", std::string("probability")));
        moe.training_mode = corpus::parse_negative_mode(manifest.value("training_mode", std::string("all-negatives")));
        moe.encoder = learn::encoder_from_json(manifest.at("encoder"));
        moe.category_map =
            CategoryMap::from_json(read_file(dir / manifest.at("category_map").get<std::string>()));

        auto router_file = learn::model_file_from_json(read_file(dir / manifest.at("router").get<std::string>()));
        moe.router.model = std::move(router_file.model);
        moe.router.train = router_file.train;
        moe.router.roster = manifest.at("roster").get<std::vector<std::string>>();

        for (const auto& e : manifest.at("experts")) {
            auto file = learn::model_file_from_json(read_file(dir / e.at("file").get<std::string>()));
            ExpertModel expert;
            expert.category = e.at("category").get<std::string>();
            expert.model = std::move(file.model);
            expert.train = file.train;
            expert.training_mode = moe.training_mode;
            auto cat = expert.category;
            moe.experts.emplace(std::move(cat), std::move(expert));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bundle manifest: ") + e.what());
    }
    moe.validate();
    return moe;
}

}  // namespace moevd::moe
