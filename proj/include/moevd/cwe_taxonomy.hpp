#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "moevd/error.hpp"

namespace moevd::taxonomy {

inline constexpr std::string_view kNoInfo = "CWE-noinfo";
inline constexpr std::string_view kAggCategory = "CWE-agg";

/// A CWE identifier in canonical form: "CWE-<digits>" (no leading zeros) or
/// "CWE-noinfo". Parsing is case-insensitive.
class CweId {
public:
    /// Throws ParseError for anything that is not one of the two forms.
    static CweId parse(std::string_view text);
    static std::optional<CweId> try_parse(std::string_view text);
    static CweId noinfo() { return CweId(std::string(kNoInfo)); }

    const std::string& str() const noexcept { return id_; }
    bool is_noinfo() const noexcept { return id_ == kNoInfo; }

    friend auto operator<=>(const CweId&, const CweId&) = default;

private:
    explicit CweId(std::string id) : id_(std::move(id)) {}
    std::string id_;
};

/// A top-level CweId string or "CWE-agg".
using CategoryId = std::string;

/// Parent-of hierarchy. Acyclic; every node reaches a root.
class CweTree {
public:
    CweTree() = default;

    /// Builds from explicit nodes and (parent, child) edges. Throws
    /// TaxonomyError on a cycle or when CWE-noinfo takes part in an edge.
    CweTree(std::set<CweId> nodes, const std::vector<std::pair<CweId, CweId>>& edges);

    bool contains(const CweId& id) const { return nodes_.count(id) != 0; }
    const std::set<CweId>& nodes() const noexcept { return nodes_; }
    const std::set<CweId>& roots() const noexcept { return roots_; }
    const std::set<CweId>& parents(const CweId& id) const;
    const std::set<CweId>& children(const CweId& id) const;

    /// Roots reachable by following parent edges; {id} for a root.
    /// CWE-noinfo always maps to itself. Throws LookupError for unknown ids.
    std::set<CweId> top_level_of(const CweId& id) const;

private:
    std::set<CweId> nodes_;
    std::map<CweId, std::set<CweId>> parents_;
    std::map<CweId, std::set<CweId>> children_;
    std::set<CweId> roots_;
};

/// Parses the taxonomy edge-list format: one `<parent>\t<child>` per line,
/// a lone id declares an isolated node, `#` lines and blank lines are skipped.
CweTree load_tree(std::string_view source);

/// Expert-category assignment derived from the tree and training counts.
struct CategoryMap {
    static constexpr int kVersion = 1;

    std::map<CweId, CategoryId> assignment;
    std::vector<CategoryId> categories;  // expert roster
    std::set<CweId> agg_members;
    std::map<CategoryId, std::size_t> category_counts;
    std::size_t min_instances = 100;
    bool fallback_to_agg = true;

    bool has_category(const CategoryId& c) const;
    std::size_t index_of(const CategoryId& c) const;  // position in roster

    /// Serializes to the versioned JSON object; deterministic byte output.
    std::string to_json() const;
    static CategoryMap from_json(std::string_view text);
};

/// Assigns every counted id (and every tree node whose category is in the
/// roster) to one category. Multi-root ids go to the reachable root with the
/// largest aggregated count, ties broken lexicographically. Roots whose
/// assigned total is below `min_instances` fold into "CWE-agg".
/// Counted ids absent from the tree are treated as their own roots.
CategoryMap build_categories(const CweTree& tree, const std::map<CweId, std::size_t>& vuln_counts,
                             std::size_t min_instances = 100);

/// Total lookup. Unknown ids go to CWE-agg when `map.fallback_to_agg` is set
/// and CWE-agg is in the roster; otherwise LookupError.
CategoryId category_of(const CategoryMap& map, const CweId& id);

}  // namespace moevd::taxonomy
