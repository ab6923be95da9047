#include "moevd/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "moevd/error.hpp"

namespace moevd::eval {

namespace fs = std::filesystem;

void ConfusionCounts::add(bool truth, bool predicted) {
    if (truth)
        ++(predicted ? tp : fn);
    else
        ++(predicted ? fp : tn);
}

Metrics metrics(const ConfusionCounts& c) {
    auto ratio = [](std::size_t num, std::size_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    Metrics m;
    m.counts = c;
    m.precision = ratio(c.tp, c.tp + c.fp);
    m.recall = ratio(c.tp, c.tp + c.fn);
    m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

std::vector<ScoredSample> score(const moe::MoEModel& moe, const corpus::SplitCorpus& split,
                                std::span<const std::size_t> indices, const moe::EncodedStore& encoded,
                                std::optional<std::size_t> k) {
    std::vector<ScoredSample> out;
    out.reserve(indices.size());
    for (auto i : indices) {
        const auto& s = split.at(i);
        ScoredSample r;
        r.truth = s.vulnerable();
        r.cwe = s.cwe;
        for (const auto& rc : moe::route(moe, encoded[i])) r.ranking.push_back(rc.category);
        r.prediction = moe::predict(moe, encoded[i], k);
        out.push_back(std::move(r));
    }
    return out;
}

Metrics overall(std::span<const ScoredSample> scored) {
    ConfusionCounts c;
    for (const auto& s : scored) c.add(s.truth, s.prediction.vulnerable);
    return metrics(c);
}

Metrics group_metrics(std::span<const ScoredSample> scored, const std::set<CweId>& members) {
    ConfusionCounts c;
    for (const auto& s : scored) {
        if (!s.truth)
            c.add(false, s.prediction.vulnerable);
        else if (s.cwe && members.count(*s.cwe))
            c.add(true, s.prediction.vulnerable);
    }
    return metrics(c);
}

std::map<std::string, double> per_cwe_recall(std::span<const ScoredSample> scored, const corpus::CweEvalGroup& groups) {
    std::map<std::string, double> out;
    for (const auto& [label, members] : groups.groups) {
        std::size_t hit = 0, total = 0;
        for (const auto& s : scored) {
            if (!s.truth || !s.cwe || !members.count(*s.cwe)) continue;
            ++total;
            hit += s.prediction.vulnerable ? 1 : 0;
        }
        if (total) out[label] = static_cast<double>(hit) / static_cast<double>(total);
    }
    return out;
}

RoutingReport routing_accuracy(std::span<const ScoredSample> scored, const taxonomy::CategoryMap& map, std::size_t k) {
    RoutingReport r;
    r.k = k;
    ConfusionCounts right, wrong;
    for (const auto& s : scored) {
        if (!s.truth) {
            right.add(false, s.prediction.vulnerable);
            wrong.add(false, s.prediction.vulnerable);
            continue;
        }
        if (!s.cwe) continue;
        CategoryId cat;
        try {
            cat = taxonomy::category_of(map, *s.cwe);
        } catch (const LookupError&) {
            continue;
        }
        ++r.evaluated;
        const auto top = std::min(k, s.ranking.size());
        const bool ok = std::find(s.ranking.begin(), s.ranking.begin() + static_cast<std::ptrdiff_t>(top), cat) !=
                        s.ranking.begin() + static_cast<std::ptrdiff_t>(top);
        if (ok) {
            ++r.correct;
            right.add(true, s.prediction.vulnerable);
        } else {
            wrong.add(true, s.prediction.vulnerable);
        }
    }
    r.correct_fraction = r.evaluated ? static_cast<double>(r.correct) / static_cast<double>(r.evaluated) : 0.0;
    r.when_correct = metrics(right);
    r.when_wrong = metrics(wrong);
    return r;
}

RoutingReport routing_accuracy(const moe::MoEModel& moe, const corpus::SplitCorpus& split,
                               std::span<const std::size_t> indices, const moe::EncodedStore& encoded) {
    const auto scored = score(moe, split, indices, encoded);
    return routing_accuracy(scored, moe.category_map, moe.k);
}

Metrics ideal_routing_eval(const moe::MoEModel& moe, const corpus::SplitCorpus& split,
                           std::span<const std::size_t> indices, const moe::EncodedStore& encoded) {
    ConfusionCounts c;
    for (auto i : indices) {
        const auto& s = split.at(i);
        std::optional<CategoryId> cat;
        if (s.vulnerable() && s.cwe) {
            try {
                cat = taxonomy::category_of(moe.category_map, *s.cwe);
            } catch (const LookupError&) {
            }
        }
        bool predicted;
        if (cat && moe.experts.count(*cat))
            predicted = moe::expert_probability(moe.expert(*cat), encoded[i]) >= moe.threshold;
        else
            predicted = moe::predict(moe, encoded[i]).vulnerable;
        c.add(s.vulnerable(), predicted);
    }
    return metrics(c);
}

ExpertMatrix expert_matrix(const std::map<CategoryId, moe::ExpertModel>& experts, std::span<const CategoryId> roster,
                           const corpus::SplitCorpus& split, std::span<const std::size_t> indices,
                           const moe::EncodedStore& encoded, const taxonomy::CategoryMap& map, double threshold) {
    ExpertMatrix m;
    m.experts.assign(roster.begin(), roster.end());
    m.categories.assign(roster.begin(), roster.end());

    // category position of each test sample; -1 for non-vulnerable, -2 for unresolvable
    std::vector<int> cat_of(indices.size(), -1);
    for (std::size_t n = 0; n < indices.size(); ++n) {
        const auto& s = split.at(indices[n]);
        if (!s.vulnerable()) continue;
        cat_of[n] = -2;
        if (!s.cwe) continue;
        try {
            const auto c = taxonomy::category_of(map, *s.cwe);
            auto it = std::find(roster.begin(), roster.end(), c);
            if (it != roster.end()) cat_of[n] = static_cast<int>(it - roster.begin());
        } catch (const LookupError&) {
        }
    }

    for (const auto& e : roster) {
        const auto& expert = experts.at(e);
        std::vector<bool> fired(indices.size());
        for (std::size_t n = 0; n < indices.size(); ++n)
            fired[n] = cat_of[n] != -2 && moe::expert_probability(expert, encoded[indices[n]]) >= threshold;
        std::vector<double> row;
        for (std::size_t c = 0; c < roster.size(); ++c) {
            ConfusionCounts cc;
            for (std::size_t n = 0; n < indices.size(); ++n) {
                if (cat_of[n] == -1)
                    cc.add(false, fired[n]);
                else if (cat_of[n] == static_cast<int>(c))
                    cc.add(true, fired[n]);
            }
            row.push_back(metrics(cc).f1);
        }
        m.f1.push_back(std::move(row));
    }
    return m;
}

namespace {

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

// Floats go out as 4-decimal JSON numbers.
nlohmann::ordered_json num4(double v) { return nlohmann::ordered_json::parse(fmt4(v)); }

nlohmann::ordered_json metrics_json(const Metrics& m) {
    nlohmann::ordered_json j;
    j["precision"] = num4(m.precision);
    j["recall"] = num4(m.recall);
    j["f1"] = num4(m.f1);
    j["tp"] = m.counts.tp;
    j["fp"] = m.counts.fp;
    j["tn"] = m.counts.tn;
    j["fn"] = m.counts.fn;
    return j;
}

std::string metrics_csv(const Metrics& m) {
    return fmt4(m.precision) + "," + fmt4(m.recall) + "," + fmt4(m.f1) + "," + std::to_string(m.counts.tp) + "," +
           std::to_string(m.counts.fp) + "," + std::to_string(m.counts.tn) + "," + std::to_string(m.counts.fn);
}

constexpr const char* kMetricsHeader = "precision,recall,f1,tp,fp,tn,fn";

void write(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

}  // namespace

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["overall"] = metrics_json(overall);

    nlohmann::ordered_json per = nlohmann::ordered_json::object();
    for (const auto& [g, m] : per_cwe) per[g] = metrics_json(m);
    j["per_cwe"] = per;
    j["per_cwe_note"] =
        "recall is the primary per-group figure; group precision counts every non-vulnerable sample as a negative";

    nlohmann::ordered_json ht;
    std::vector<std::string> head_ids, tail_ids;
    for (const auto& id : partition.head) head_ids.push_back(id.str());
    for (const auto& id : partition.tail) tail_ids.push_back(id.str());
    ht["head_cwes"] = head_ids;
    ht["tail_cwes"] = tail_ids;
    ht["head_fraction"] = num4(partition.head_fraction);
    ht["head"] = metrics_json(head);
    ht["tail"] = metrics_json(tail);
    j["head_tail"] = ht;

    nlohmann::ordered_json rt;
    rt["k"] = routing.k;
    rt["evaluated"] = routing.evaluated;
    rt["correct_fraction"] = num4(routing.correct_fraction);
    rt["when_correct"] = metrics_json(routing.when_correct);
    rt["when_wrong"] = metrics_json(routing.when_wrong);
    j["routing"] = rt;

    nlohmann::ordered_json em;
    em["experts"] = expert_matrix.experts;
    em["categories"] = expert_matrix.categories;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& row : expert_matrix.f1) {
        nlohmann::ordered_json r = nlohmann::ordered_json::array();
        for (double v : row) r.push_back(num4(v));
        rows.push_back(r);
    }
    em["f1"] = rows;
    j["expert_matrix"] = em;

    if (ideal_routing) j["ideal_routing"] = metrics_json(*ideal_routing);

    nlohmann::ordered_json vs = nlohmann::ordered_json::array();
    for (const auto& v : variants) {
        nlohmann::ordered_json r;
        r["variant"] = v.variant;
        r["metrics"] = metrics_json(v.metrics);
        if (v.routing_correct_fraction) r["routing_correct_fraction"] = num4(*v.routing_correct_fraction);
        if (!v.note.empty()) r["note"] = v.note;
        vs.push_back(r);
    }
    j["variants"] = vs;
    return j.dump(2) + "\n";
}

void EvalReport::write_csv(const fs::path& dir) const {
    fs::create_directories(dir);
    write(dir / "overall.csv", std::string("section,") + kMetricsHeader + "\noverall," + metrics_csv(overall) + "\n" +
                                   (ideal_routing ? "ideal_routing," + metrics_csv(*ideal_routing) + "\n" : ""));

    std::string per = std::string("group,") + kMetricsHeader + "\n";
    for (const auto& [g, m] : per_cwe) per += g + "," + metrics_csv(m) + "\n";
    write(dir / "per_cwe.csv", per);

    write(dir / "head_tail.csv", std::string("group,") + kMetricsHeader + "\nhead," + metrics_csv(head) + "\ntail," +
                                     metrics_csv(tail) + "\n");

    write(dir / "routing.csv", std::string("k,evaluated,correct_fraction,subset,") + kMetricsHeader + "\n" +
                                   std::to_string(routing.k) + "," + std::to_string(routing.evaluated) + "," +
                                   fmt4(routing.correct_fraction) + ",correct," + metrics_csv(routing.when_correct) +
                                   "\n" + std::to_string(routing.k) + "," + std::to_string(routing.evaluated) + "," +
                                   fmt4(routing.correct_fraction) + ",wrong," + metrics_csv(routing.when_wrong) + "\n");

    std::string em = "expert";
    for (const auto& c : expert_matrix.categories) em += "," + c;
    em += "\n";
    for (std::size_t e = 0; e < expert_matrix.experts.size(); ++e) {
        em += expert_matrix.experts[e];
        for (double v : expert_matrix.f1[e]) em += "," + fmt4(v);
        em += "\n";
    }
    write(dir / "expert_matrix.csv", em);

    std::string vs = std::string("variant,") + kMetricsHeader + ",routing_correct_fraction\n";
    vs += "moe," + metrics_csv(overall) + "," + fmt4(routing.correct_fraction) + "\n";
    for (const auto& v : variants)
        vs += v.variant + "," + metrics_csv(v.metrics) + "," +
              (v.routing_correct_fraction ? fmt4(*v.routing_correct_fraction) : "") + "\n";
    write(dir / "variants.csv", vs);
}

EvalReport evaluate(const moe::MoEModel& moe, const corpus::SplitCorpus& split, std::span<const std::size_t> test,
                    const moe::EncodedStore& encoded, const corpus::HeadTailPartition& partition,
                    bool with_ideal_routing) {
    for (auto i : test)
        if (i >= split.store->size()) throw ConfigError("evaluate: test index out of range");
    const auto scored = score(moe, split, test, encoded);
    EvalReport r;
    r.overall = overall(scored);
    const auto test_samples = corpus::gather(split, test);
    const auto groups = corpus::eval_groups(test_samples);
    for (const auto& [label, members] : groups.groups) r.per_cwe[label] = group_metrics(scored, members);
    r.partition = partition;
    r.head = group_metrics(scored, partition.head);
    r.tail = group_metrics(scored, partition.tail);
    r.routing = routing_accuracy(scored, moe.category_map, moe.k);
    r.expert_matrix = expert_matrix(moe.experts, moe.roster(), split, test, encoded, moe.category_map, moe.threshold);
    if (with_ideal_routing) r.ideal_routing = ideal_routing_eval(moe, split, test, encoded);
    return r;
}

}  // namespace moevd::eval
