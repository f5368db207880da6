#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "homelist/error.hpp"
#include "homelist/listing_model.hpp"
#include "homelist/parallel.hpp"

namespace homelist {

/// Undirected weighted graph over ad ids (and, when matching incrementally,
/// ids of units that existed before the current week).
class DuplicateGraph {
public:
  struct Edge {
    std::size_t u = 0;  // node indices, u < v by id
    std::size_t v = 0;
    double weight = 0.0;
  };

  std::size_t add_node(const std::string& id, bool pre_existing_unit = false) {
    if (auto it = index_.find(id); it != index_.end()) {
      if (pre_existing_unit) units_[it->second] = true;
      return it->second;
    }
    index_.emplace(id, ids_.size());
    ids_.push_back(id);
    units_.push_back(pre_existing_unit);
    return ids_.size() - 1;
  }

  void add_edge(const std::string& a, const std::string& b, double weight) {
    if (a == b) throw ValidationError("self-loop on " + a);
    if (!(weight > 0.0 && weight <= 1.0)) throw ValidationError("edge weight outside (0, 1]");
    std::size_t i = add_node(a), j = add_node(b);
    if (ids_[j] < ids_[i]) std::swap(i, j);
    if (!edge_keys_.emplace(key(i, j), edges_.size()).second) {
      throw ValidationError("duplicate edge " + ids_[i] + " - " + ids_[j]);
    }
    edges_.push_back({i, j, weight});
  }

  std::size_t node_count() const { return ids_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  bool pre_existing_unit(std::size_t i) const { return units_[i]; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::optional<std::size_t> find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

private:
  static std::uint64_t key(std::size_t i, std::size_t j) {
    return (static_cast<std::uint64_t>(i) << 32) | static_cast<std::uint64_t>(j);
  }

  std::vector<std::string> ids_;
  std::vector<bool> units_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Edge> edges_;
  std::unordered_map<std::uint64_t, std::size_t> edge_keys_;
};

/// Minimum share of the complete graph's edges a cluster must keep.
struct SimilarityRatio {
  std::uint64_t num = 5;
  std::uint64_t den = 6;

  void validate() const {
    if (den == 0 || num == 0 || num > den) throw ValidationError("similarity ratio must lie in (0, 1]");
  }
};

/// The internal-similarity test: E >= (num/den) * N(N-1)/2, compared exactly
/// in integers (12 E >= 5 N (N - 1) for the default 5/6). Singletons always
/// pass.
inline bool similarity_condition(std::uint64_t nodes, std::uint64_t edges, SimilarityRatio r = {}) {
  if (nodes <= 1) return true;
  return 2 * r.den * edges >= r.num * nodes * (nodes - 1);
}

struct ClusterDecision {
  std::vector<std::string> nodes;
  std::size_t edges = 0;
  std::size_t max_edges = 0;
  bool accepted = true;
};

struct RemovedEdge {
  enum class Reason { unit_constraint, similarity };
  std::string u;
  std::string v;
  double weight = 0.0;
  Reason reason = Reason::similarity;
};

inline const char* to_string(RemovedEdge::Reason r) {
  return r == RemovedEdge::Reason::unit_constraint ? "unit_constraint" : "similarity";
}

struct ClusterResult {
  std::vector<std::vector<std::string>> clusters;  // each sorted; ordered by first id
  std::vector<ClusterDecision> decisions;          // one per accepted cluster, same order
  std::vector<RemovedEdge> removed;                // in removal order, components in id order
};

namespace detail {

struct ComponentWork {
  std::vector<std::size_t> nodes;   // graph node indices
  std::vector<std::size_t> edges;   // graph edge indices, weakest first
};

struct ComponentOutcome {
  std::vector<ClusterDecision> accepted;
  std::vector<RemovedEdge> removed;
};

inline ComponentOutcome resolve_component(const DuplicateGraph& g, ComponentWork work, SimilarityRatio ratio) {
  ComponentOutcome out;
  const auto& E = g.edges();
  std::vector<ComponentWork> stack;
  stack.push_back(std::move(work));
  std::unordered_map<std::size_t, std::vector<std::size_t>> adj;

  while (!stack.empty()) {
    ComponentWork c = std::move(stack.back());
    stack.pop_back();
    std::size_t first = 0;  // edges [first, end) are still present
    for (;;) {
      const auto n = static_cast<std::uint64_t>(c.nodes.size());
      const auto e = static_cast<std::uint64_t>(c.edges.size() - first);
      const auto units = std::count_if(c.nodes.begin(), c.nodes.end(),
                                       [&](std::size_t i) { return g.pre_existing_unit(i); });
      RemovedEdge::Reason reason;
      if (units >= 2) {
        reason = RemovedEdge::Reason::unit_constraint;
      } else if (similarity_condition(n, e, ratio)) {
        ClusterDecision d;
        for (std::size_t i : c.nodes) d.nodes.push_back(g.id(i));
        std::sort(d.nodes.begin(), d.nodes.end());
        d.edges = static_cast<std::size_t>(e);
        d.max_edges = static_cast<std::size_t>(n * (n - 1) / 2);
        out.accepted.push_back(std::move(d));
        break;
      } else {
        reason = RemovedEdge::Reason::similarity;
      }
      const auto& weakest = E[c.edges[first]];
      out.removed.push_back({g.id(weakest.u), g.id(weakest.v), weakest.weight, reason});
      ++first;

      // Is the component still connected without that edge?
      adj.clear();
      for (std::size_t k = first; k < c.edges.size(); ++k) {
        const auto& ed = E[c.edges[k]];
        adj[ed.u].push_back(ed.v);
        adj[ed.v].push_back(ed.u);
      }
      std::unordered_map<std::size_t, std::size_t> label;
      std::size_t pieces = 0;
      for (std::size_t start : c.nodes) {
        if (label.count(start)) continue;
        std::vector<std::size_t> todo{start};
        label[start] = pieces;
        while (!todo.empty()) {
          const std::size_t x = todo.back();
          todo.pop_back();
          for (std::size_t y : adj[x]) {
            if (label.emplace(y, pieces).second) todo.push_back(y);
          }
        }
        ++pieces;
      }
      if (pieces == 1) continue;

      std::vector<ComponentWork> split(pieces);
      for (std::size_t i : c.nodes) split[label[i]].nodes.push_back(i);
      for (std::size_t k = first; k < c.edges.size(); ++k) {
        split[label[E[c.edges[k]].u]].edges.push_back(c.edges[k]);
      }
      // Process pieces in ascending order of their node ids.
      for (auto& p : split) {
        std::sort(p.nodes.begin(), p.nodes.end(),
                  [&](std::size_t a, std::size_t b) { return g.id(a) < g.id(b); });
      }
      std::sort(split.begin(), split.end(), [&](const ComponentWork& a, const ComponentWork& b) {
        return g.id(a.nodes.front()) < g.id(b.nodes.front());
      });
      for (auto it = split.rbegin(); it != split.rend(); ++it) stack.push_back(std::move(*it));
      break;
    }
  }
  return out;
}

}  // namespace detail

/// Splits the graph into clusters: each connected component is accepted if it
/// satisfies the internal-similarity condition and holds at most one
/// pre-existing unit; otherwise its weakest edge (lowest weight, ties broken
/// by the smaller id pair) is removed and the resulting components are
/// examined again. The result is a partition of the nodes.
inline ClusterResult resolve_clusters(const DuplicateGraph& g, unsigned workers = 1, SimilarityRatio ratio = {}) {
  ratio.validate();
  const std::size_t n = g.node_count();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : g.edges()) parent[find(e.u)] = find(e.v);

  std::map<std::size_t, std::size_t> root_to_component;
  std::vector<detail::ComponentWork> components;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return g.id(a) < g.id(b); });
  for (std::size_t i : order) {
    auto [it, fresh] = root_to_component.emplace(find(i), components.size());
    if (fresh) components.emplace_back();
    components[it->second].nodes.push_back(i);
  }
  std::vector<std::size_t> edge_order(g.edge_count());
  std::iota(edge_order.begin(), edge_order.end(), std::size_t{0});
  const auto& E = g.edges();
  std::sort(edge_order.begin(), edge_order.end(), [&](std::size_t a, std::size_t b) {
    return std::forward_as_tuple(E[a].weight, g.id(E[a].u), g.id(E[a].v)) <
           std::forward_as_tuple(E[b].weight, g.id(E[b].u), g.id(E[b].v));
  });
  for (std::size_t k : edge_order) components[root_to_component[find(E[k].u)]].edges.push_back(k);

  std::vector<detail::ComponentOutcome> outcomes(components.size());
  parallel_for(components.size(), workers, [&](std::size_t c) {
    outcomes[c] = detail::resolve_component(g, std::move(components[c]), ratio);
  });

  ClusterResult result;
  for (auto& o : outcomes) {
    for (auto& d : o.accepted) result.decisions.push_back(std::move(d));
    for (auto& r : o.removed) result.removed.push_back(std::move(r));
  }
  std::sort(result.decisions.begin(), result.decisions.end(),
            [](const ClusterDecision& a, const ClusterDecision& b) { return a.nodes < b.nodes; });
  for (const auto& d : result.decisions) result.clusters.push_back(d.nodes);
  return result;
}

// ---------------------------------------------------------------------------
// Aggregation

namespace detail {

/// Most frequent present value; ties go to the value held by the earliest
/// member (members are visited in (created_on, id) order).
template <typename T, typename Get>
std::optional<T> mode_of(std::span<const Ad* const> ordered, Get get) {
  std::vector<std::pair<T, int>> counts;
  for (const Ad* ad : ordered) {
    std::optional<T> v = get(*ad);
    if (!v) continue;
    auto it = std::find_if(counts.begin(), counts.end(), [&](const auto& c) { return c.first == *v; });
    if (it == counts.end()) counts.emplace_back(*v, 1);
    else ++it->second;
  }
  if (counts.empty()) return std::nullopt;
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

}  // namespace detail

/// Builds a housing unit from its member ads.
inline HousingUnit aggregate_unit(std::span<const Ad> members, std::string unit_id) {
  if (members.empty()) throw ValidationError("cannot aggregate an empty member set");
  std::vector<const Ad*> ordered;
  for (const Ad& ad : members) ordered.push_back(&ad);
  std::sort(ordered.begin(), ordered.end(), [](const Ad* a, const Ad* b) {
    return std::tie(a->created_on, a->id) < std::tie(b->created_on, b->id);
  });
  std::span<const Ad* const> view(ordered);

  HousingUnit u;
  u.id = std::move(unit_id);
  for (const Ad* ad : ordered) u.member_ad_ids.push_back(ad->id);
  std::sort(u.member_ad_ids.begin(), u.member_ad_ids.end());

  u.zone_id = *detail::mode_of<std::string>(view, [](const Ad& a) { return std::optional(a.zone_id); });
  double lat = 0, lon = 0;
  for (const Ad* ad : ordered) {
    lat += ad->location.lat;
    lon += ad->location.lon;
  }
  u.location = {lat / double(ordered.size()), lon / double(ordered.size())};

  auto& t = u.traits;
  t.floor_area = detail::mode_of<double>(view, [](const Ad& a) { return a.traits.floor_area; });
  t.floor = detail::mode_of<int>(view, [](const Ad& a) { return a.traits.floor; });
  t.rooms = detail::mode_of<int>(view, [](const Ad& a) { return a.traits.rooms; });
  t.bathrooms = detail::mode_of<int>(view, [](const Ad& a) { return a.traits.bathrooms; });
  for (std::size_t k = 0; k < kOrderedTraitCount; ++k) {
    t.ordered[k] = detail::mode_of<int>(view, [k](const Ad& a) { return a.traits.ordered[k]; });
  }
  for (std::size_t k = 0; k < kBinaryTraitCount; ++k) {
    auto v = detail::mode_of<Tri>(view, [k](const Ad& a) {
      const Tri x = a.traits.binary[k];
      return x == Tri::missing ? std::nullopt : std::optional<Tri>(x);
    });
    t.binary[k] = v.value_or(Tri::missing);
  }
  t.heating = detail::mode_of<std::string>(view, [](const Ad& a) { return a.traits.heating; });
  t.property_type = detail::mode_of<std::string>(view, [](const Ad& a) { return a.traits.property_type; });

  u.entry_date = ordered.front()->created_on;
  const bool all_removed = std::all_of(ordered.begin(), ordered.end(),
                                       [](const Ad* a) { return a->removed_on.has_value(); });
  if (all_removed) {
    Date exit = *ordered.front()->removed_on;
    for (const Ad* ad : ordered) exit = std::max(exit, *ad->removed_on);
    u.exit_date = exit;
  }
  u.asking_price = *detail::mode_of<double>(view, [all_removed](const Ad& a) {
    return (all_removed || !a.removed_on) ? std::optional(a.asking_price) : std::nullopt;
  });
  return u;
}

}  // namespace homelist
