#include "moevd/cwe_taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <functional>

#include <json.hpp>

namespace moevd::taxonomy {

namespace {

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
           });
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

const std::set<CweId> kEmpty;

}  // namespace

std::optional<CweId> CweId::try_parse(std::string_view text) {
    text = trim(text);
    if (text.size() < 5 || !iequals(text.substr(0, 4), "CWE-")) return std::nullopt;
    std::string_view rest = text.substr(4);
    if (iequals(rest, "noinfo")) return CweId::noinfo();
    if (!std::all_of(rest.begin(), rest.end(), [](char c) { return c >= '0' && c <= '9'; })) return std::nullopt;
    while (rest.size() > 1 && rest.front() == '0') rest.remove_prefix(1);
    return CweId("CWE-" + std::string(rest));
}

CweId CweId::parse(std::string_view text) {
    if (auto id = try_parse(text)) return *id;
    throw ParseError("invalid CWE id '" + std::string(text) + "'");
}

CweTree::CweTree(std::set<CweId> nodes, const std::vector<std::pair<CweId, CweId>>& edges)
    : nodes_(std::move(nodes)) {
    for (const auto& [parent, child] : edges) {
        if (parent.is_noinfo() || child.is_noinfo())
            throw TaxonomyError("CWE-noinfo cannot take part in an edge (" + parent.str() + " -> " + child.str() + ")");
        if (parent == child) throw TaxonomyError("cycle through edge " + parent.str() + " -> " + child.str());
        nodes_.insert(parent);
        nodes_.insert(child);
        parents_[child].insert(parent);
        children_[parent].insert(child);
    }

    // Three-colour DFS over child->parent edges.
    enum class Mark { white, grey, black };
    std::map<CweId, Mark> mark;
    std::function<void(const CweId&)> visit = [&](const CweId& node) {
        mark[node] = Mark::grey;
        if (auto it = parents_.find(node); it != parents_.end()) {
            for (const auto& p : it->second) {
                Mark m = mark.count(p) ? mark[p] : Mark::white;
                if (m == Mark::grey)
                    throw TaxonomyError("cycle detected at edge " + p.str() + " -> " + node.str());
                if (m == Mark::white) visit(p);
            }
        }
        mark[node] = Mark::black;
    };
    for (const auto& n : nodes_)
        if (!mark.count(n)) visit(n);

    for (const auto& n : nodes_)
        if (!parents_.count(n)) roots_.insert(n);
}

const std::set<CweId>& CweTree::parents(const CweId& id) const {
    auto it = parents_.find(id);
    return it == parents_.end() ? kEmpty : it->second;
}

const std::set<CweId>& CweTree::children(const CweId& id) const {
    auto it = children_.find(id);
    return it == children_.end() ? kEmpty : it->second;
}

std::set<CweId> CweTree::top_level_of(const CweId& id) const {
    if (id.is_noinfo()) return {id};
    if (!contains(id)) throw LookupError("unknown CWE id " + id.str(), id.str());
    std::set<CweId> out;
    std::set<CweId> seen{id};
    std::vector<CweId> stack{id};
    while (!stack.empty()) {
        CweId cur = stack.back();
        stack.pop_back();
        const auto& ps = parents(cur);
        if (ps.empty()) out.insert(cur);
        for (const auto& p : ps)
            if (seen.insert(p).second) stack.push_back(p);
    }
    return out;
}

CweTree load_tree(std::string_view source) {
    std::set<CweId> nodes;
    std::vector<std::pair<CweId, CweId>> edges;
    std::size_t line_no = 0;
    while (!source.empty()) {
        ++line_no;
        auto nl = source.find('\n');
        std::string_view line = source.substr(0, nl);
        source = nl == std::string_view::npos ? std::string_view{} : source.substr(nl + 1);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        std::string_view t = trim(line);
        if (t.empty() || t.front() == '#') continue;

        auto tab = t.find('\t');
        if (tab == std::string_view::npos) {
            auto id = CweId::try_parse(t);
            if (!id) throw ParseError("malformed taxonomy line '" + std::string(line) + "'", line_no);
            nodes.insert(*id);
            continue;
        }
        auto parent = CweId::try_parse(t.substr(0, tab));
        auto child = CweId::try_parse(t.substr(tab + 1));
        if (!parent || !child || t.substr(tab + 1).find('\t') != std::string_view::npos)
            throw ParseError("malformed taxonomy edge '" + std::string(line) + "'", line_no);
        edges.emplace_back(*parent, *child);
    }
    return CweTree(std::move(nodes), edges);
}

bool CategoryMap::has_category(const CategoryId& c) const {
    return std::find(categories.begin(), categories.end(), c) != categories.end();
}

std::size_t CategoryMap::index_of(const CategoryId& c) const {
    auto it = std::find(categories.begin(), categories.end(), c);
    if (it == categories.end()) throw LookupError("category " + c + " not in roster", c);
    return static_cast<std::size_t>(it - categories.begin());
}

std::string CategoryMap::to_json() const {
    nlohmann::ordered_json j;
    j["version"] = kVersion;
    j["min_instances"] = min_instances;
    j["fallback_to_agg"] = fallback_to_agg;
    j["categories"] = categories;
    nlohmann::ordered_json counts = nlohmann::ordered_json::object();
    for (const auto& c : categories) counts[c] = category_counts.count(c) ? category_counts.at(c) : 0;
    j["category_counts"] = counts;
    nlohmann::ordered_json assign = nlohmann::ordered_json::object();
    for (const auto& [id, cat] : assignment) assign[id.str()] = cat;
    j["assignment"] = assign;
    std::vector<std::string> agg;
    for (const auto& id : agg_members) agg.push_back(id.str());
    j["agg_members"] = agg;
    return j.dump(2) + "\n";
}

CategoryMap CategoryMap::from_json(std::string_view text) {
    CategoryMap m;
    try {
        auto j = nlohmann::json::parse(text);
        if (j.at("version").get<int>() != kVersion)
            throw ParseError("unsupported category map version " + j.at("version").dump());
        m.min_instances = j.at("min_instances").get<std::size_t>();
        m.fallback_to_agg = j.value("fallback_to_agg", true);
        m.categories = j.at("categories").get<std::vector<std::string>>();
        if (j.contains("category_counts"))
            for (auto& [k, v] : j["category_counts"].items()) m.category_counts[k] = v.get<std::size_t>();
        for (auto& [k, v] : j.at("assignment").items()) m.assignment.emplace(CweId::parse(k), v.get<std::string>());
        for (const auto& s : j.at("agg_members")) m.agg_members.insert(CweId::parse(s.get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("category map: ") + e.what());
    }
    return m;
}

CategoryMap build_categories(const CweTree& tree, const std::map<CweId, std::size_t>& vuln_counts,
                             std::size_t min_instances) {
    if (vuln_counts.empty()) throw ConfigError("build_categories: empty vulnerability counts");
    if (min_instances < 1) throw ConfigError("build_categories: min_instances must be >= 1");

    auto roots_of = [&](const CweId& id) -> std::set<CweId> {
        if (id.is_noinfo() || !tree.contains(id)) return {id};
        return tree.top_level_of(id);
    };

    std::set<CweId> universe = tree.nodes();
    for (const auto& [id, n] : vuln_counts) universe.insert(id);

    std::map<CweId, std::set<CweId>> reach;
    std::map<CweId, std::size_t> root_total;  // descendant-inclusive, multi-root ids counted for each
    for (const auto& id : universe) {
        reach[id] = roots_of(id);
        auto it = vuln_counts.find(id);
        std::size_t n = it == vuln_counts.end() ? 0 : it->second;
        for (const auto& r : reach[id]) root_total[r] += n;
    }

    std::map<CweId, CweId> chosen_root;
    std::map<CweId, std::size_t> assigned_total;
    for (const auto& id : universe) {
        const auto& rs = reach[id];
        const CweId* best = nullptr;
        for (const auto& r : rs)  // set order is lexicographic, so strict > keeps the first on ties
            if (!best || root_total[r] > root_total[*best]) best = &r;
        chosen_root.emplace(id, *best);
        auto it = vuln_counts.find(id);
        assigned_total[*best] += it == vuln_counts.end() ? 0 : it->second;
    }

    CategoryMap map;
    map.min_instances = min_instances;
    std::size_t agg_total = 0;
    std::set<CweId> retained;
    for (const auto& [root, total] : assigned_total) {
        if (total >= min_instances) {
            retained.insert(root);
            map.category_counts[root.str()] = total;
        } else {
            agg_total += total;
        }
    }
    const bool has_agg = agg_total > 0;
    if (has_agg) map.category_counts[std::string(kAggCategory)] = agg_total;

    for (const auto& [id, root] : chosen_root) {
        if (retained.count(root)) {
            map.assignment.emplace(id, root.str());
        } else if (has_agg) {
            map.assignment.emplace(id, std::string(kAggCategory));
            map.agg_members.insert(id);
        }
    }

    for (const auto& [c, n] : map.category_counts) map.categories.push_back(c);
    std::sort(map.categories.begin(), map.categories.end(), [&](const CategoryId& a, const CategoryId& b) {
        auto na = map.category_counts.at(a), nb = map.category_counts.at(b);
        return na != nb ? na > nb : a < b;
    });
    return map;
}

CategoryId category_of(const CategoryMap& map, const CweId& id) {
    if (auto it = map.assignment.find(id); it != map.assignment.end()) return it->second;
    if (map.fallback_to_agg && map.has_category(std::string(kAggCategory))) return std::string(kAggCategory);
    throw LookupError("CWE id " + id.str() + " has no category", id.str());
}

}  // namespace moevd::taxonomy
