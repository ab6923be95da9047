#include "moevd/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "moevd/rng.hpp"

namespace moevd::corpus {

using nlohmann::json;

namespace {

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

}  // namespace

std::vector<CodeSample> ingest(std::string_view source) {
    std::vector<CodeSample> out;
    std::unordered_set<std::string> seen;
    std::size_t line_no = 0;
    while (!source.empty()) {
        ++line_no;
        auto nl = source.find('\n');
        std::string_view line = source.substr(0, nl);
        source = nl == std::string_view::npos ? std::string_view{} : source.substr(nl + 1);
        if (blank(line)) continue;

        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
        }
        if (!j.is_object()) throw ParseError("record is not a JSON object", line_no);

        auto required = [&](const char* key) -> const json& {
            auto it = j.find(key);
            if (it == j.end()) throw ParseError(std::string("missing required field '") + key + "'", line_no);
            return *it;
        };

        CodeSample s;
        const json& id = required("id");
        if (!id.is_string()) throw ParseError("field 'id' must be a string", line_no);
        s.sample_id = id.get<std::string>();

        const json& func = required("func");
        if (!func.is_string()) throw ParseError("field 'func' must be a string", line_no);
        s.code = func.get<std::string>();
        if (blank(s.code)) throw ParseError("field 'func' is empty", line_no);

        const json& target = required("target");
        if (!target.is_number_integer() || (target.get<int>() != 0 && target.get<int>() != 1))
            throw ParseError("field 'target' must be 0 or 1", line_no);
        s.label = target.get<int>() == 1 ? Label::vulnerable : Label::non_vulnerable;

        if (auto it = j.find("cwe"); it != j.end() && !it->is_null()) {
            if (!it->is_string()) throw ParseError("field 'cwe' must be a string", line_no);
            const auto text = it->get<std::string>();
            if (!blank(text)) {
                auto cwe = CweId::try_parse(text);
                if (!cwe) throw ParseError("invalid CWE id '" + text + "'", line_no);
                s.cwe = *cwe;
            }
        }
        if (auto it = j.find("project"); it != j.end() && !it->is_null()) {
            if (!it->is_string()) throw ParseError("field 'project' must be a string", line_no);
            s.project = it->get<std::string>();
        }

        if (!seen.insert(s.sample_id).second)
            throw IngestionError("line " + std::to_string(line_no) + ": duplicate sample id '" + s.sample_id + "'");
        out.push_back(std::move(s));
    }
    return out;
}

std::string to_jsonl(const CodeSample& s) {
    nlohmann::ordered_json j;
    j["id"] = s.sample_id;
    j["func"] = s.code;
    j["target"] = s.vulnerable() ? 1 : 0;
    if (s.cwe) j["cwe"] = s.cwe->str();
    if (s.project) j["project"] = *s.project;
    return j.dump();
}

std::string SplitCorpus::manifest_json() const {
    nlohmann::ordered_json j;
    auto ids = [&](const std::vector<std::size_t>& idx) {
        std::vector<std::string> v;
        v.reserve(idx.size());
        for (auto i : idx) v.push_back(at(i).sample_id);
        return v;
    };
    j["seed"] = seed;
    j["train"] = ids(train);
    j["valid"] = ids(valid);
    j["test"] = ids(test);
    return j.dump(1) + "\n";
}

SplitCorpus split(SampleStore samples, std::uint64_t seed, SplitRatios ratios) {
    if (!samples) throw ConfigError("split: no sample store");
    const auto n = samples->size();
    if (n < 10) throw ConfigError("split: need at least 10 samples, got " + std::to_string(n));
    const double total = ratios.train + ratios.valid + ratios.test;
    if (ratios.train <= 0 || ratios.valid < 0 || ratios.test < 0 || std::abs(total - 1.0) > 1e-9)
        throw ConfigError("split: ratios must be non-negative, train > 0, and sum to 1");

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(std::span(order));

    const auto n_train = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(n)));
    const auto n_valid = static_cast<std::size_t>(std::llround(ratios.valid * static_cast<double>(n)));

    SplitCorpus out;
    out.store = std::move(samples);
    out.seed = seed;
    out.train.assign(order.begin(), order.begin() + n_train);
    out.valid.assign(order.begin() + n_train, order.begin() + n_train + n_valid);
    out.test.assign(order.begin() + n_train + n_valid, order.end());
    return out;
}

SplitCorpus split_from_manifest(SampleStore samples, std::string_view manifest) {
    if (!samples) throw ConfigError("split: no sample store");
    json j;
    try {
        j = json::parse(manifest);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("split file: invalid JSON: ") + e.what());
    }
    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < samples->size(); ++i) by_id.emplace((*samples)[i].sample_id, i);

    SplitCorpus out;
    out.store = samples;
    out.seed = j.value("seed", std::uint64_t{0});
    std::unordered_set<std::size_t> used;
    auto take = [&](const char* key, std::vector<std::size_t>& dst) {
        if (!j.contains(key) || !j[key].is_array()) throw ConfigError(std::string("split file: missing list '") + key + "'");
        for (const auto& v : j[key]) {
            if (!v.is_string()) throw ConfigError(std::string("split file: non-string id in '") + key + "'");
            auto it = by_id.find(v.get<std::string>());
            if (it == by_id.end()) throw ConfigError("split file: unknown sample id '" + v.get<std::string>() + "'");
            if (!used.insert(it->second).second)
                throw ConfigError("split file: sample id '" + v.get<std::string>() + "' listed twice");
            dst.push_back(it->second);
        }
    };
    take("train", out.train);
    take("valid", out.valid);
    take("test", out.test);
    if (used.size() != samples->size())
        throw ConfigError("split file: " + std::to_string(samples->size() - used.size()) + " samples not assigned");
    return out;
}

std::string to_string(NegativeMode mode) {
    return mode == NegativeMode::all_negatives ? "all-negatives" : "nonvuln-only-negatives";
}

NegativeMode parse_negative_mode(std::string_view text) {
    if (text == "all-negatives" || text == "all_negatives") return NegativeMode::all_negatives;
    if (text == "nonvuln-only-negatives" || text == "nonvuln_only_negatives") return NegativeMode::nonvuln_only_negatives;
    throw ConfigError("unknown negative mode '" + std::string(text) + "'");
}

ExpertView expert_view(const SplitCorpus& split, std::span<const std::size_t> indices, const CategoryMap& map,
                       const CategoryId& category, NegativeMode mode, std::uint64_t shuffle_seed) {
    if (!map.has_category(category)) throw LookupError("category " + category + " not in roster", category);
    ExpertView view;
    view.category = category;
    view.mode = mode;
    view.samples.reserve(indices.size());
    for (auto i : indices) {
        const auto& s = split.at(i);
        if (!s.vulnerable()) {
            view.samples.push_back({i, 0});
            continue;
        }
        if (!s.cwe) {
            ++view.unannotated_vulnerable;
            if (mode == NegativeMode::all_negatives) view.samples.push_back({i, 0});
            continue;
        }
        if (taxonomy::category_of(map, *s.cwe) == category) {
            view.samples.push_back({i, 1});
            ++view.positives;
        } else if (mode == NegativeMode::all_negatives) {
            view.samples.push_back({i, 0});
        }
    }
    if (view.positives == 0) throw TrainingDataError("category " + category + " has no positive training sample");
    Rng rng(shuffle_seed);
    rng.shuffle(std::span(view.samples));
    return view;
}

ExpertView expert_view(const SplitCorpus& split, const CategoryMap& map, const CategoryId& category,
                       NegativeMode mode, std::uint64_t shuffle_seed) {
    return expert_view(split, split.train, map, category, mode, shuffle_seed);
}

RouterView router_view(const SplitCorpus& split, const CategoryMap& map, std::uint64_t shuffle_seed) {
    RouterView view;
    view.roster = map.categories;
    std::vector<std::size_t> per_class(view.roster.size(), 0);
    for (auto i : split.train) {
        const auto& s = split.at(i);
        if (!s.vulnerable()) continue;
        if (!s.cwe) {
            ++view.unannotated_vulnerable;
            continue;
        }
        auto cls = map.index_of(taxonomy::category_of(map, *s.cwe));
        view.samples.push_back({i, static_cast<int>(cls)});
        ++per_class[cls];
    }
    for (std::size_t c = 0; c < view.roster.size(); ++c)
        if (per_class[c] == 0)
            throw TrainingDataError("category " + view.roster[c] + " has no vulnerable training sample for the router");
    const auto total = static_cast<double>(view.samples.size());
    for (auto n : per_class) view.class_weights.push_back(total / static_cast<double>(n));
    Rng rng(shuffle_seed);
    rng.shuffle(std::span(view.samples));
    return view;
}

HeadTailPartition head_tail(const std::map<CweId, std::size_t>& counts) {
    std::size_t total = 0;
    for (const auto& [id, n] : counts) total += n;
    if (total == 0) throw ConfigError("head_tail: no annotated vulnerable sample");

    HeadTailPartition out;
    out.ranked.assign(counts.begin(), counts.end());
    std::stable_sort(out.ranked.begin(), out.ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::size_t acc = 0;
    for (const auto& [id, n] : out.ranked) {
        if (2 * acc >= total) {
            out.tail.insert(id);
        } else {
            out.head.insert(id);
            acc += n;
        }
    }
    out.head_fraction = static_cast<double>(acc) / static_cast<double>(total);
    return out;
}

HeadTailPartition head_tail(std::span<const CodeSample> samples) {
    std::map<CweId, std::size_t> counts;
    for (const auto& s : samples)
        if (s.vulnerable() && s.cwe) ++counts[*s.cwe];
    return head_tail(counts);
}

CweEvalGroup eval_groups(std::span<const CodeSample> test) {
    std::map<CweId, std::size_t> counts;
    for (const auto& s : test)
        if (s.vulnerable() && s.cwe) ++counts[*s.cwe];
    CweEvalGroup out;
    for (const auto& [id, n] : counts) {
        if (n < 10)
            out.groups[out.small_group_label].insert(id);
        else
            out.groups[id.str()] = {id};
    }
    return out;
}

std::map<CweId, std::size_t> vulnerable_counts(const SplitCorpus& split, std::span<const std::size_t> indices) {
    std::map<CweId, std::size_t> counts;
    for (auto i : indices) {
        const auto& s = split.at(i);
        if (s.vulnerable() && s.cwe) ++counts[*s.cwe];
    }
    return counts;
}

std::vector<CodeSample> gather(const SplitCorpus& split, std::span<const std::size_t> indices) {
    std::vector<CodeSample> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(split.at(i));
    return out;
}

}  // namespace moevd::corpus
