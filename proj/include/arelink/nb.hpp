#pragma once

// Neighbourhood structures over an AreaCollection: queen contiguity with
// nearest-neighbour bridging for islands, the island audit, manual edits and
// connectivity. All positions visible to users are 1-based.

#include "arelink/errors.hpp"
#include "arelink/geom.hpp"

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace arelink {

/// A link attached to an island by bridging rather than by contiguity.
struct InducedLink {
  std::string island_name;
  int island_num = 0;
  int nb_num = 0;
  std::string nb_name;

  friend bool operator==(const InducedLink&, const InducedLink&) = default;
};

using IslandAudit = std::vector<InducedLink>;

/// Symmetric, irreflexive named adjacency. Immutable once built: every edit
/// returns a new structure.
class NbStructure {
 public:
  NbStructure() = default;

  NbStructure(std::vector<std::string> names, std::vector<std::vector<int>> adj,
              std::vector<InducedLink> induced = {})
      : names_(std::move(names)), adj_(std::move(adj)), induced_(std::move(induced)) {
    validate();
  }

  std::size_t size() const { return names_.size(); }
  bool empty() const { return names_.empty(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<std::vector<int>>& adj() const { return adj_; }
  const std::vector<InducedLink>& induced() const { return induced_; }

  /// Neighbours of the unit at 1-based position `pos`.
  const std::vector<int>& neighbours(int pos) const { return adj_.at(static_cast<std::size_t>(pos - 1)); }

  bool has_edge(int a, int b) const {
    const auto& l = neighbours(a);
    return std::binary_search(l.begin(), l.end(), b);
  }

  std::size_t edge_count() const {
    std::size_t s = 0;
    for (const auto& l : adj_) s += l.size();
    return s / 2;
  }

  std::optional<int> position(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return static_cast<int>(i) + 1;
    return std::nullopt;
  }

  /// Binary symmetric 0/1 matrix in unit order.
  std::vector<std::vector<int>> matrix() const {
    std::vector<std::vector<int>> m(size(), std::vector<int>(size(), 0));
    for (std::size_t i = 0; i < size(); ++i)
      for (int j : adj_[i]) m[i][static_cast<std::size_t>(j - 1)] = 1;
    return m;
  }

  /// Undirected edges (i < j), 1-based, in lexicographic order.
  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> out;
    for (std::size_t i = 0; i < size(); ++i)
      for (int j : adj_[i])
        if (static_cast<int>(i) + 1 < j) out.emplace_back(static_cast<int>(i) + 1, j);
    return out;
  }

  friend bool operator==(const NbStructure&, const NbStructure&) = default;

 private:
  void validate() const {
    if (adj_.size() != names_.size())
      throw NbError("adjacency has " + std::to_string(adj_.size()) + " rows for " +
                    std::to_string(names_.size()) + " names");
    const int n = static_cast<int>(names_.size());
    for (int i = 1; i <= n; ++i) {
      const auto& l = adj_[static_cast<std::size_t>(i - 1)];
      for (std::size_t k = 0; k < l.size(); ++k) {
        const int j = l[k];
        if (j < 1 || j > n)
          throw NbError("neighbour position " + std::to_string(j) + " of unit " +
                        std::to_string(i) + " out of range");
        if (j == i) throw NbError("unit " + std::to_string(i) + " lists itself as a neighbour");
        if (k > 0 && l[k - 1] >= j)
          throw NbError("neighbour list of unit " + std::to_string(i) +
                        " is not strictly ascending");
        const auto& back = adj_[static_cast<std::size_t>(j - 1)];
        if (!std::binary_search(back.begin(), back.end(), i))
          throw NbError("asymmetric link " + std::to_string(i) + " -> " + std::to_string(j));
      }
    }
    for (const auto& r : induced_) {
      if (r.island_num < 1 || r.island_num > n || r.nb_num < 1 || r.nb_num > n)
        throw NbError("induced link refers to a position out of range");
      const auto& l = adj_[static_cast<std::size_t>(r.island_num - 1)];
      if (!std::binary_search(l.begin(), l.end(), r.nb_num))
        throw NbError("induced link " + r.island_name + " - " + r.nb_name +
                      " is not an edge of the structure");
    }
  }

  std::vector<std::string> names_;
  std::vector<std::vector<int>> adj_;
  std::vector<InducedLink> induced_;
};

/// A unit reference: a name, or a 1-based position.
using UnitRef = std::variant<std::string, int>;

inline std::string to_string(const UnitRef& r) {
  return std::visit(
      [](const auto& v) -> std::string {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, int>)
          return std::to_string(v);
        else
          return v;
      },
      r);
}

/// Parses "12" as a position and anything else as a name.
inline UnitRef parse_unit_ref(std::string_view s) {
  if (!s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }))
    return std::stoi(std::string(s));
  return std::string(s);
}

inline int resolve(const NbStructure& nb, const UnitRef& ref) {
  if (const int* pos = std::get_if<int>(&ref)) {
    if (*pos < 1 || *pos > static_cast<int>(nb.size()))
      throw NbError("position " + std::to_string(*pos) + " out of range 1.." +
                    std::to_string(nb.size()));
    return *pos;
  }
  const auto& name = std::get<std::string>(ref);
  auto pos = nb.position(name);
  if (!pos) throw NbError("unknown unit '" + name + "'");
  return *pos;
}

namespace detail {

inline std::pair<int, int> resolve_pair(const NbStructure& nb, const UnitRef& a,
                                        const UnitRef& b) {
  const int i = resolve(nb, a);
  const int j = resolve(nb, b);
  if (i == j)
    throw NbError("cannot link unit " + to_string(a) + " to itself (position " +
                  std::to_string(i) + ")");
  return {i, j};
}

inline void insert_sorted(std::vector<int>& v, int x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it == v.end() || *it != x) v.insert(it, x);
}

inline void erase_sorted(std::vector<int>& v, int x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it != v.end() && *it == x) v.erase(it);
}

}  // namespace detail

/// Adds the symmetric edge {a, b}. Joining an existing edge is a no-op.
inline NbStructure manual_join(const NbStructure& nb, const UnitRef& a, const UnitRef& b) {
  const auto [i, j] = detail::resolve_pair(nb, a, b);
  auto adj = nb.adj();
  detail::insert_sorted(adj[static_cast<std::size_t>(i - 1)], j);
  detail::insert_sorted(adj[static_cast<std::size_t>(j - 1)], i);
  return NbStructure(nb.names(), std::move(adj), nb.induced());
}

/// Removes the symmetric edge {a, b}; an absent edge is an error.
inline NbStructure manual_cut(const NbStructure& nb, const UnitRef& a, const UnitRef& b) {
  const auto [i, j] = detail::resolve_pair(nb, a, b);
  if (!nb.has_edge(i, j))
    throw NbError("no edge between " + nb.names()[static_cast<std::size_t>(i - 1)] + " (" +
                  std::to_string(i) + ") and " + nb.names()[static_cast<std::size_t>(j - 1)] +
                  " (" + std::to_string(j) + ") to cut");
  auto adj = nb.adj();
  detail::erase_sorted(adj[static_cast<std::size_t>(i - 1)], j);
  detail::erase_sorted(adj[static_cast<std::size_t>(j - 1)], i);
  std::vector<InducedLink> induced;
  for (const auto& r : nb.induced())
    if (!((r.island_num == i && r.nb_num == j) || (r.island_num == j && r.nb_num == i)))
      induced.push_back(r);
  return NbStructure(nb.names(), std::move(adj), std::move(induced));
}

/// Links added by bridging, in island order.
inline IslandAudit check_islands(const NbStructure& nb) { return nb.induced(); }

/// Connected components as sorted 1-based position lists, ordered by their
/// smallest member.
inline std::vector<std::vector<int>> components(const NbStructure& nb) {
  const std::size_t n = nb.size();
  std::vector<int> comp(n, -1);
  std::vector<std::vector<int>> out;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    const int id = static_cast<int>(out.size());
    out.emplace_back();
    std::vector<std::size_t> stack{s};
    comp[s] = id;
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      out.back().push_back(static_cast<int>(v) + 1);
      for (int w : nb.adj()[v]) {
        const auto wi = static_cast<std::size_t>(w - 1);
        if (comp[wi] < 0) {
          comp[wi] = id;
          stack.push_back(wi);
        }
      }
    }
    std::sort(out.back().begin(), out.back().end());
  }
  return out;
}

/// Plain first-order queen contiguity.
inline NbStructure queen_structure(const AreaCollection& coll,
                                   double tol = geom::kDefaultTolerance) {
  const std::size_t n = coll.size();
  std::vector<BBox> boxes;
  boxes.reserve(n);
  for (const auto& u : coll.units()) boxes.push_back(u.bbox());
  std::vector<std::vector<int>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (boxes[i].gap(boxes[j]) > tol) continue;
      if (geom::min_distance(coll[i], coll[j]) <= tol) {
        adj[i].push_back(static_cast<int>(j) + 1);
        adj[j].push_back(static_cast<int>(i) + 1);
      }
    }
  }
  for (auto& l : adj) std::sort(l.begin(), l.end());
  return NbStructure(coll.names(), std::move(adj));
}

/// Links every pair of units whose centroids lie within `threshold`.
inline NbStructure dist_band(const AreaCollection& coll, double threshold) {
  if (!(threshold >= 0.0)) throw InputError("distance threshold must be non-negative");
  const std::size_t n = coll.size();
  std::vector<Point> c;
  c.reserve(n);
  for (const auto& u : coll.units()) c.push_back(geom::centroid(u));
  std::vector<std::vector<int>> adj(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (geom::dist(c[i], c[j]) <= threshold) {
        adj[i].push_back(static_cast<int>(j) + 1);
        adj[j].push_back(static_cast<int>(i) + 1);
      }
  for (auto& l : adj) std::sort(l.begin(), l.end());
  return NbStructure(coll.names(), std::move(adj));
}

enum class NbView { list, matrix };

struct BridgeOptions {
  int link_islands_k = 1;
  bool remove_islands = false;
  NbView nb_structure = NbView::list;
  bool add_to_dataframe = true;
  double tol = geom::kDefaultTolerance;
  geom::Metric metric = geom::Metric::boundary;
};

struct Bridged {
  AreaCollection areas;
  NbStructure nb;
};

namespace detail {

/// Collection keyed by `name_field` (no-op when it already is).
inline AreaCollection rekey(const AreaCollection& coll, std::string_view name_field) {
  if (name_field.empty() || name_field == coll.name_field()) return coll;
  std::vector<AreaUnit> units = coll.units();
  for (std::size_t i = 0; i < units.size(); ++i) {
    auto it = units[i].attrs.find(std::string(name_field));
    if (it == units[i].attrs.end())
      throw InputError("unit at position " + std::to_string(i + 1) + " has no field '" +
                       std::string(name_field) + "'");
    units[i].name = it->is_string() ? it->get<std::string>() : it->dump();
  }
  return AreaCollection(std::move(units), std::string(name_field));
}

inline json nb_column(const NbStructure& nb, std::size_t i, NbView view) {
  json v = json::array();
  if (view == NbView::list) {
    for (int j : nb.adj()[i]) v.push_back(j);
  } else {
    std::vector<int> row(nb.size(), 0);
    for (int j : nb.adj()[i]) row[static_cast<std::size_t>(j - 1)] = 1;
    for (int x : row) v.push_back(x);
  }
  return v;
}

}  // namespace detail

/// Queen contiguity, with units that have no contiguous neighbour either
/// removed or linked to their `link_islands_k` nearest units (other islands
/// included). Bridged links are recorded for the island audit.
inline Bridged st_bridges(const AreaCollection& input, std::string_view name_field,
                          const BridgeOptions& opt = {}) {
  if (input.empty()) throw InputError("cannot build a neighbourhood over an empty collection");
  AreaCollection coll = detail::rekey(input, name_field);
  NbStructure queen = queen_structure(coll, opt.tol);

  std::vector<std::size_t> islands;
  for (std::size_t i = 0; i < coll.size(); ++i)
    if (queen.adj()[i].empty()) islands.push_back(i);

  NbStructure nb;
  if (opt.remove_islands) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < coll.size(); ++i)
      if (!queen.adj()[i].empty()) keep.push_back(i);
    if (keep.size() < 2)
      throw NbError("removing islands leaves " + std::to_string(keep.size()) +
                    " unit(s); need at least 2");
    std::vector<int> newpos(coll.size(), 0);
    for (std::size_t k = 0; k < keep.size(); ++k) newpos[keep[k]] = static_cast<int>(k) + 1;
    std::vector<std::vector<int>> adj;
    for (auto i : keep) {
      std::vector<int> l;
      for (int j : queen.adj()[i]) l.push_back(newpos[static_cast<std::size_t>(j - 1)]);
      adj.push_back(std::move(l));
    }
    coll = coll.subset(keep);
    nb = NbStructure(coll.names(), std::move(adj));
  } else {
    if (opt.link_islands_k < 1 || static_cast<std::size_t>(opt.link_islands_k) >= coll.size())
      throw NbError("link_islands_k = " + std::to_string(opt.link_islands_k) +
                    " must lie in 1.." + std::to_string(coll.size() - 1));
    auto adj = queen.adj();
    std::vector<InducedLink> induced;
    for (auto i : islands) {
      for (auto j : geom::knn_indices(coll, i, static_cast<std::size_t>(opt.link_islands_k),
                                      opt.metric)) {
        detail::insert_sorted(adj[i], static_cast<int>(j) + 1);
        detail::insert_sorted(adj[j], static_cast<int>(i) + 1);
        induced.push_back({coll[i].name, static_cast<int>(i) + 1, static_cast<int>(j) + 1,
                           coll[j].name});
      }
    }
    nb = NbStructure(coll.names(), std::move(adj), std::move(induced));
  }

  if (opt.add_to_dataframe)
    for (std::size_t i = 0; i < coll.size(); ++i)
      coll[i].attrs["nb"] = detail::nb_column(nb, i, opt.nb_structure);
  return {std::move(coll), std::move(nb)};
}

}  // namespace arelink
