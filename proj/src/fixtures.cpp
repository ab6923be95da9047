#include "moevd/fixtures.hpp"

#include <set>
#include <sstream>

#include "moevd/error.hpp"
#include "moevd/rng.hpp"

namespace moevd::fixtures {

namespace {

constexpr const char* kSyllables[] = {"ka", "lo", "mi", "ne", "pu", "ra", "si", "to", "vu", "xe", "ba", "co", "di",
                                      "fe", "gu", "hi", "jo", "ku", "ly", "mo", "nu", "pe", "qi", "ro", "su", "ty",
                                      "ve", "wa", "yo", "ze", "an", "el", "or", "ix", "um", "ed"};
constexpr std::size_t kSyllableCount = sizeof(kSyllables) / sizeof(kSyllables[0]);

std::string word(Rng& rng, std::size_t syllables) {
    std::string w;
    for (std::size_t i = 0; i < syllables; ++i) w += kSyllables[rng.below(kSyllableCount)];
    return w;
}

struct Vocab {
    std::string prefix;
    std::vector<std::string> vars;
    std::vector<std::string> funcs;
    std::string type;
};

// Disjoint vocabularies: every generated word is unique across domains.
std::vector<Vocab> make_vocabs(const FixtureSpec& spec, Rng& rng) {
    std::set<std::string> used;
    auto fresh = [&](std::size_t syl) {
        for (;;) {
            auto w = word(rng, syl);
            if (used.insert(w).second) return w;
        }
    };
    std::vector<Vocab> out;
    for (std::size_t d = 0; d < spec.domains.size(); ++d) {
        Vocab v;
        v.prefix = fresh(2);
        v.type = v.prefix + "_" + fresh(2);
        for (std::size_t i = 0; i < spec.vocab_size; ++i) v.vars.push_back(v.prefix + "_" + fresh(2));
        for (std::size_t i = 0; i < spec.vocab_size / 2; ++i) v.funcs.push_back(v.prefix + "_" + fresh(3));
        out.push_back(std::move(v));
    }
    return out;
}

class Writer {
public:
    Writer(const FixtureSpec& spec, const std::vector<Vocab>& vocabs, Rng& rng)
        : spec_(spec), vocabs_(vocabs), rng_(rng) {}

    std::string function(std::size_t domain, std::vector<std::size_t> markers) {
        const auto n = spec_.min_statements + rng_.below(spec_.max_statements - spec_.min_statements + 1);
        std::vector<std::string> body;
        for (std::size_t i = 0; i < n; ++i) body.push_back(statement(domain));
        for (auto m : markers) {
            const auto pos = rng_.below(body.size() + 1);
            body.insert(body.begin() + static_cast<std::ptrdiff_t>(pos), spec_.markers[m]);
        }

        std::ostringstream out;
        out << "static int " << func(domain) << "(struct " << pick_vocab(domain).type << " *" << var(domain) << ", size_t len)\n{\n";
        out << "    int i, ret = 0;\n";
        for (const auto& s : body) out << "    " << s << "\n";
        out << "out:\n    return ret;\n}\n";
        return out.str();
    }

private:
    const Vocab& pick_vocab(std::size_t domain) {
        if (spec_.own_vocab >= 1.0 || rng_.bernoulli(spec_.own_vocab)) return vocabs_[domain];
        return vocabs_[spec_.domains[domain].neighbor];
    }
    std::string var(std::size_t domain) {
        const auto& v = pick_vocab(domain);
        return v.vars[rng_.below(v.vars.size())];
    }
    std::string func(std::size_t domain) {
        const auto& v = pick_vocab(domain);
        return v.funcs[rng_.below(v.funcs.size())];
    }
    std::string num() { return std::to_string(rng_.below(64)); }

    std::string statement(std::size_t d) {
        switch (rng_.below(7)) {
            case 0: return var(d) + " = " + var(d) + " + " + num() + ";";
            case 1: return "if (" + var(d) + " > " + var(d) + ")\n        return -" + num() + ";";
            case 2: return "for (i = 0; i < " + var(d) + "; i++)\n        " + var(d) + "[i] = " + num() + ";";
            case 3: return func(d) + "(" + var(d) + ", " + var(d) + ");";
            case 4: return var(d) + " = " + func(d) + "(" + var(d) + ", len);";
            case 5: {
                auto v = var(d);
                return "while (" + v + " != NULL)\n        " + v + " = " + v + "->next;";
            }
            default: return "ret = " + func(d) + "(ctx, " + var(d) + ");\n    if (ret < 0)\n        goto out;";
        }
    }

    const FixtureSpec& spec_;
    const std::vector<Vocab>& vocabs_;
    Rng& rng_;
};

}  // namespace

std::string Fixture::jsonl() const {
    std::string out;
    for (const auto& s : samples) out += corpus::to_jsonl(s) + "\n";
    return out;
}

Fixture generate(const FixtureSpec& spec) {
    if (spec.domains.empty() || spec.markers.empty()) throw ConfigError("fixture: no domains or markers");
    if (spec.min_statements == 0 || spec.max_statements < spec.min_statements)
        throw ConfigError("fixture: bad statement range");
    for (const auto& d : spec.domains)
        if (d.marker >= spec.markers.size() || d.neighbor >= spec.domains.size() || d.cwes.empty())
            throw ConfigError("fixture: domain " + d.name + " is inconsistent");

    Rng rng(spec.seed);
    const auto vocabs = make_vocabs(spec, rng);
    Writer writer(spec, vocabs, rng);

    struct Draft {
        std::size_t domain;
        bool vulnerable;
    };
    std::vector<Draft> drafts;
    for (std::size_t d = 0; d < spec.domains.size(); ++d) {
        for (std::size_t i = 0; i < spec.domains[d].vulnerable; ++i) drafts.push_back({d, true});
        for (std::size_t i = 0; i < spec.domains[d].clean; ++i) drafts.push_back({d, false});
    }
    rng.shuffle(std::span(drafts));

    auto other_marker = [&](std::size_t own) {
        std::size_t m;
        do m = rng.below(spec.markers.size());
        while (m == own && spec.markers.size() > 1);
        return m;
    };

    Fixture fx;
    fx.name = spec.name;
    fx.min_instances = spec.min_instances;
    for (std::size_t n = 0; n < drafts.size(); ++n) {
        const auto& draft = drafts[n];
        const auto& dom = spec.domains[draft.domain];
        std::vector<std::size_t> markers;
        corpus::CodeSample s;
        char id[64];
        std::snprintf(id, sizeof id, "%s-%05zu", spec.name.c_str(), n);
        s.sample_id = id;
        s.project = dom.name;
        if (draft.vulnerable) {
            markers.push_back(dom.marker);
            if (rng.bernoulli(spec.extra_marker)) markers.push_back(other_marker(dom.marker));
            s.label = corpus::Label::vulnerable;
            // Root id half the time, otherwise a uniformly drawn child.
            const auto& cw = dom.cwes;
            const std::size_t pick = cw.size() == 1 || rng.bernoulli(0.5) ? 0 : 1 + rng.below(cw.size() - 1);
            s.cwe = taxonomy::CweId::parse(cw[pick]);
        } else if (rng.bernoulli(spec.benign_marker)) {
            markers.push_back(other_marker(dom.marker));
        }
        s.code = writer.function(draft.domain, markers);
        fx.samples.push_back(std::move(s));
    }

    std::ostringstream tax;
    tax << "# " << spec.name << " fixture taxonomy: <parent>\\t<child>, lone ids are isolated nodes\n";
    std::set<std::string> in_edges;
    for (const auto& [p, c] : spec.edges) {
        tax << p << '\t' << c << '\n';
        in_edges.insert(p);
        in_edges.insert(c);
    }
    for (const auto& d : spec.domains)
        for (const auto& c : d.cwes)
            if (!in_edges.count(c) && c != "CWE-noinfo") tax << c << '\n';
    fx.taxonomy = tax.str();
    return fx;
}

FixtureSpec separable12_spec() {
    FixtureSpec s;
    s.name = "separable12";
    s.seed = 20240612;
    s.min_instances = 30;
    s.markers = {"strcpy(buf, src);",        "memcpy(dst, src, len);", "sprintf(buf, fmt, len);",
                 "free(ptr);",               "strcat(buf, src);",      "n = atoi(str);"};
    // Each marker is the vulnerable pattern of two domains and benign elsewhere.
    s.domains = {
        {"core", {"CWE-664", "CWE-118", "CWE-119", "CWE-221", "CWE-400", "CWE-416"}, 170, 140, 0, 0},
        {"input", {"CWE-707", "CWE-20", "CWE-74", "CWE-79", "CWE-89"}, 140, 130, 1, 1},
        {"math", {"CWE-682", "CWE-189", "CWE-190", "CWE-369"}, 110, 125, 2, 2},
        {"access", {"CWE-284", "CWE-264", "CWE-269", "CWE-287"}, 95, 120, 3, 3},
        {"flow", {"CWE-691", "CWE-674", "CWE-835"}, 85, 115, 4, 4},
        {"errors", {"CWE-703", "CWE-754", "CWE-755"}, 75, 115, 5, 5},
        {"crypto", {"CWE-693", "CWE-311", "CWE-326", "CWE-327"}, 65, 110, 0, 6},
        {"quality", {"CWE-710", "CWE-561", "CWE-758"}, 55, 110, 1, 7},
        {"compare", {"CWE-697", "CWE-185", "CWE-1023"}, 50, 105, 2, 8},
        {"interact", {"CWE-435", "CWE-188", "CWE-436"}, 45, 105, 3, 9},
        {"unknown", {"CWE-noinfo"}, 80, 110, 4, 10},
        {"misc-388", {"CWE-388"}, 15, 40, 5, 11},
        {"misc-320", {"CWE-320"}, 13, 40, 5, 12},
        {"misc-254", {"CWE-254"}, 12, 40, 5, 13},
    };
    s.edges = {{"CWE-664", "CWE-118"}, {"CWE-118", "CWE-119"}, {"CWE-664", "CWE-221"}, {"CWE-664", "CWE-400"},
               {"CWE-664", "CWE-416"}, {"CWE-707", "CWE-20"},  {"CWE-707", "CWE-74"},  {"CWE-74", "CWE-79"},
               {"CWE-74", "CWE-89"},   {"CWE-682", "CWE-189"}, {"CWE-682", "CWE-190"}, {"CWE-682", "CWE-369"},
               {"CWE-284", "CWE-264"}, {"CWE-284", "CWE-269"}, {"CWE-284", "CWE-287"}, {"CWE-691", "CWE-674"},
               {"CWE-691", "CWE-835"}, {"CWE-703", "CWE-754"}, {"CWE-703", "CWE-755"}, {"CWE-693", "CWE-311"},
               {"CWE-693", "CWE-326"}, {"CWE-693", "CWE-327"}, {"CWE-710", "CWE-561"}, {"CWE-710", "CWE-758"},
               {"CWE-697", "CWE-185"}, {"CWE-697", "CWE-1023"}, {"CWE-435", "CWE-188"}, {"CWE-435", "CWE-436"}};
    return s;
}

FixtureSpec confusable4_spec() {
    FixtureSpec s;
    s.name = "confusable4";
    s.seed = 20240604;
    s.min_instances = 30;
    s.markers = {"strcpy(buf, src);", "memcpy(dst, src, len);", "sprintf(buf, fmt, len);", "free(ptr);"};
    s.domains = {
        {"core", {"CWE-664", "CWE-119", "CWE-416"}, 160, 260, 0, 1},
        {"input", {"CWE-707", "CWE-20", "CWE-79"}, 130, 250, 0, 0},
        {"math", {"CWE-682", "CWE-190", "CWE-369"}, 110, 240, 1, 3},
        {"flow", {"CWE-691", "CWE-835"}, 90, 240, 1, 2},
    };
    s.edges = {{"CWE-664", "CWE-119"}, {"CWE-664", "CWE-416"}, {"CWE-707", "CWE-20"},
               {"CWE-707", "CWE-79"},  {"CWE-682", "CWE-190"}, {"CWE-682", "CWE-369"},
               {"CWE-691", "CWE-835"}};
    s.own_vocab = 0.6;
    return s;
}

}  // namespace moevd::fixtures
