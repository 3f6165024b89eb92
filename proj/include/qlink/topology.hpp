#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "qlink/types.hpp"

namespace qlink {

struct Edge {
  NodeId a;
  NodeId b;  // a < b
  friend bool operator==(const Edge&, const Edge&) = default;
};

namespace spec {
struct Grid { int rows; int cols; };
struct Complete { int n; };
struct CompleteBipartite { int m; int n; };
struct Star { int leaves; };
struct Friendship { int triangles; };
struct Wheel { int n; };  // n vertices total: hub + C_{n-1}
struct Cycle { int n; };
}  // namespace spec

using TopologySpec = std::variant<spec::Grid, spec::Complete, spec::CompleteBipartite, spec::Star,
                                  spec::Friendship, spec::Wheel, spec::Cycle>;

/// Undirected, connected, simple graph.
class Topology {
 public:
  Topology(std::string kind, std::string label, std::vector<std::string> names,
           std::vector<Edge> edges)
      : kind_(std::move(kind)), label_(std::move(label)), names_(std::move(names)), edges_(std::move(edges)) {
    adjacency_.assign(names_.size(), {});
    for (std::size_t k = 0; k < edges_.size(); ++k) {
      Edge& e = edges_[k];
      if (e.a == e.b) throw ConfigError("topology has a self-loop");
      if (to_index(e.a) > to_index(e.b)) std::swap(e.a, e.b);
      if (to_index(e.b) >= names_.size()) throw ConfigError("edge endpoint outside node set");
      for (std::size_t j = 0; j < k; ++j)
        if (edges_[j] == e) throw ConfigError("duplicate edge in topology");
      adjacency_[to_index(e.a)].push_back(e.b);
      adjacency_[to_index(e.b)].push_back(e.a);
    }
    if (!connected()) throw ConfigError("topology is not connected");
  }

  const std::string& kind() const { return kind_; }
  /// Canonical spec string, e.g. "grid:3x3".
  const std::string& label() const { return label_; }
  std::size_t node_count() const { return names_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<NodeId>& neighbors(NodeId n) const { return adjacency_.at(to_index(n)); }
  const std::string& name(NodeId n) const { return names_.at(to_index(n)); }
  const std::vector<std::string>& names() const { return names_; }

  bool adjacent(NodeId x, NodeId y) const {
    if (to_index(x) >= names_.size() || to_index(y) >= names_.size()) return false;
    const auto& adj = adjacency_[to_index(x)];
    return std::find(adj.begin(), adj.end(), y) != adj.end();
  }

  std::optional<NodeId> find(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return NodeId(static_cast<std::uint32_t>(i));
    return std::nullopt;
  }

  std::string edge_label(const Edge& e) const { return name(e.a) + "-" + name(e.b); }

 private:
  bool connected() const {
    if (names_.empty()) return false;
    std::vector<bool> seen(names_.size(), false);
    std::vector<std::uint32_t> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      auto v = stack.back();
      stack.pop_back();
      for (NodeId w : adjacency_[v])
        if (!seen[to_index(w)]) {
          seen[to_index(w)] = true;
          stack.push_back(to_index(w));
        }
    }
    return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
  }

  std::string kind_;
  std::string label_;
  std::vector<std::string> names_;
  std::vector<Edge> edges_;
  std::vector<std::vector<NodeId>> adjacency_;
};

namespace detail {

struct GraphBuilder {
  std::vector<std::string> names;
  std::vector<Edge> edges;

  NodeId add(std::string name) {
    names.push_back(std::move(name));
    return NodeId(static_cast<std::uint32_t>(names.size() - 1));
  }
  void link(NodeId a, NodeId b) { edges.push_back(Edge{a, b}); }
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("degenerate topology parameters: " + what);
}

}  // namespace detail

inline std::string to_string(const TopologySpec& s) {
  struct V {
    std::string operator()(spec::Grid g) const { return "grid:" + std::to_string(g.rows) + "x" + std::to_string(g.cols); }
    std::string operator()(spec::Complete c) const { return "complete:" + std::to_string(c.n); }
    std::string operator()(spec::CompleteBipartite b) const { return "bipartite:" + std::to_string(b.m) + "x" + std::to_string(b.n); }
    std::string operator()(spec::Star s) const { return "star:" + std::to_string(s.leaves); }
    std::string operator()(spec::Friendship f) const { return "friendship:" + std::to_string(f.triangles); }
    std::string operator()(spec::Wheel w) const { return "wheel:" + std::to_string(w.n); }
    std::string operator()(spec::Cycle c) const { return "cycle:" + std::to_string(c.n); }
  };
  return std::visit(V{}, s);
}

/// Builds the canonical graph for `s`. Node names are structured so traces
/// stay readable: grid "r<i>c<j>", bipartite "a<i>"/"b<j>", hubs "h".
inline Topology build_topology(const TopologySpec& s) {
  detail::GraphBuilder g;
  std::string kind;
  if (auto* grid = std::get_if<spec::Grid>(&s)) {
    kind = "grid";
    detail::require(grid->rows >= 1 && grid->cols >= 1 && grid->rows * grid->cols >= 2, "grid needs >= 2 nodes");
    std::vector<NodeId> ids;
    for (int r = 0; r < grid->rows; ++r)
      for (int c = 0; c < grid->cols; ++c) ids.push_back(g.add("r" + std::to_string(r) + "c" + std::to_string(c)));
    auto at = [&](int r, int c) { return ids[static_cast<std::size_t>(r * grid->cols + c)]; };
    for (int r = 0; r < grid->rows; ++r)
      for (int c = 0; c < grid->cols; ++c) {
        if (c + 1 < grid->cols) g.link(at(r, c), at(r, c + 1));
        if (r + 1 < grid->rows) g.link(at(r, c), at(r + 1, c));
      }
  } else if (auto* k = std::get_if<spec::Complete>(&s)) {
    kind = "complete";
    detail::require(k->n >= 2, "complete graph needs n >= 2");
    std::vector<NodeId> ids;
    for (int i = 0; i < k->n; ++i) ids.push_back(g.add("v" + std::to_string(i)));
    for (int i = 0; i < k->n; ++i)
      for (int j = i + 1; j < k->n; ++j) g.link(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
  } else if (auto* b = std::get_if<spec::CompleteBipartite>(&s)) {
    kind = "bipartite";
    detail::require(b->m >= 1 && b->n >= 1, "bipartite parts need >= 1 node");
    std::vector<NodeId> left, right;
    for (int i = 0; i < b->m; ++i) left.push_back(g.add("a" + std::to_string(i)));
    for (int j = 0; j < b->n; ++j) right.push_back(g.add("b" + std::to_string(j)));
    for (NodeId x : left)
      for (NodeId y : right) g.link(x, y);
  } else if (auto* st = std::get_if<spec::Star>(&s)) {
    kind = "star";
    detail::require(st->leaves >= 1, "star needs >= 1 leaf");
    NodeId hub = g.add("h");
    for (int i = 0; i < st->leaves; ++i) g.link(hub, g.add("l" + std::to_string(i)));
  } else if (auto* f = std::get_if<spec::Friendship>(&s)) {
    kind = "friendship";
    detail::require(f->triangles >= 1, "friendship graph needs >= 1 triangle");
    NodeId hub = g.add("h");
    for (int t = 0; t < f->triangles; ++t) {
      NodeId x = g.add("t" + std::to_string(t) + "a");
      NodeId y = g.add("t" + std::to_string(t) + "b");
      g.link(hub, x);
      g.link(hub, y);
      g.link(x, y);
    }
  } else if (auto* w = std::get_if<spec::Wheel>(&s)) {
    kind = "wheel";
    detail::require(w->n >= 4, "wheel needs n >= 4 (hub + C_3)");
    NodeId hub = g.add("h");
    const int rim = w->n - 1;
    std::vector<NodeId> ids;
    for (int i = 0; i < rim; ++i) ids.push_back(g.add("c" + std::to_string(i)));
    for (int i = 0; i < rim; ++i) g.link(hub, ids[static_cast<std::size_t>(i)]);
    for (int i = 0; i < rim; ++i) g.link(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>((i + 1) % rim)]);
  } else if (auto* c = std::get_if<spec::Cycle>(&s)) {
    kind = "cycle";
    detail::require(c->n >= 3, "cycle needs n >= 3");
    std::vector<NodeId> ids;
    for (int i = 0; i < c->n; ++i) ids.push_back(g.add("c" + std::to_string(i)));
    for (int i = 0; i < c->n; ++i) g.link(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>((i + 1) % c->n)]);
  }
  return Topology(kind, to_string(s), std::move(g.names), std::move(g.edges));
}

namespace detail {

inline int parse_positive(std::string_view text, std::string_view whole) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty() || v < 1)
    throw ConfigError("bad topology spec '" + std::string(whole) + "'");
  return v;
}

inline std::pair<int, int> parse_pair(std::string_view text, std::string_view whole) {
  auto x = text.find('x');
  if (x == std::string_view::npos) throw ConfigError("bad topology spec '" + std::string(whole) + "': expected AxB");
  return {parse_positive(text.substr(0, x), whole), parse_positive(text.substr(x + 1), whole)};
}

}  // namespace detail

/// Parses `grid:2x3`, `complete:4`, `bipartite:2x3`, `star:4`,
/// `friendship:3`, `wheel:6`, `cycle:5`.
inline TopologySpec parse_topology_spec(std::string_view text) {
  auto colon = text.find(':');
  if (colon == std::string_view::npos) throw ConfigError("bad topology spec '" + std::string(text) + "'");
  auto kind = text.substr(0, colon);
  auto args = text.substr(colon + 1);
  if (kind == "grid") {
    auto [r, c] = detail::parse_pair(args, text);
    return spec::Grid{r, c};
  }
  if (kind == "bipartite") {
    auto [m, n] = detail::parse_pair(args, text);
    return spec::CompleteBipartite{m, n};
  }
  int n = detail::parse_positive(args, text);
  if (kind == "complete") return spec::Complete{n};
  if (kind == "star") return spec::Star{n};
  if (kind == "friendship") return spec::Friendship{n};
  if (kind == "wheel") return spec::Wheel{n};
  if (kind == "cycle") return spec::Cycle{n};
  throw ConfigError("unknown topology kind '" + std::string(kind) + "'");
}

/// The fourteen graphs of the evaluation suite.
inline std::vector<TopologySpec> evaluation_suite() {
  return {spec::Grid{2, 2},  spec::Grid{2, 3},       spec::Grid{3, 3},
          spec::Complete{2}, spec::Complete{3},      spec::Complete{4},
          spec::CompleteBipartite{2, 3},
          spec::Star{3},     spec::Star{4},
          spec::Friendship{2}, spec::Friendship{3},
          spec::Wheel{6},    spec::Cycle{5},         spec::Cycle{6}};
}

namespace detail {

// Branch on the lowest-index vertex still free: leave it unmatched, or match
// it to each free neighbour. Prunes when even a perfect matching of the rest
// cannot beat the incumbent.
inline void matching_search(const Topology& t, std::vector<bool>& used, std::size_t from, int size, int& best) {
  best = std::max(best, size);
  std::size_t v = from;
  while (v < used.size() && used[v]) ++v;
  if (v >= used.size()) return;
  std::size_t remaining = 0;
  for (std::size_t u = v; u < used.size(); ++u) remaining += used[u] ? 0 : 1;
  if (size + static_cast<int>(remaining / 2) <= best) return;
  used[v] = true;
  for (NodeId w : t.neighbors(NodeId(static_cast<std::uint32_t>(v)))) {
    if (used[to_index(w)]) continue;
    used[to_index(w)] = true;
    matching_search(t, used, v + 1, size + 1, best);
    used[to_index(w)] = false;
  }
  matching_search(t, used, v + 1, size, best);
  used[v] = false;
}

}  // namespace detail

/// Size of a maximum matching. Exact branch-and-bound; intended for small graphs.
inline int matching_number(const Topology& t) {
  std::vector<bool> used(t.node_count(), false);
  int best = 0;
  detail::matching_search(t, used, 0, 0, best);
  return best;
}

enum class ProtocolKind { kEsp, kDqp };

constexpr std::string_view to_string(ProtocolKind p) { return p == ProtocolKind::kEsp ? "esp" : "dqp"; }

inline ProtocolKind parse_protocol(std::string_view s) {
  if (s == "esp") return ProtocolKind::kEsp;
  if (s == "dqp") return ProtocolKind::kDqp;
  throw ConfigError("unknown protocol '" + std::string(s) + "' (expected esp or dqp)");
}

/// Classical message graph. Under DQP the scheduler is node index
/// `node_count()` of the quantum topology.
struct ControlPlane {
  ProtocolKind mode;
  std::vector<Edge> edges;
  std::optional<NodeId> scheduler;
};

inline ControlPlane control_plane(const Topology& t, ProtocolKind mode) {
  if (mode == ProtocolKind::kEsp) return ControlPlane{mode, t.edges(), std::nullopt};
  NodeId s{static_cast<std::uint32_t>(t.node_count())};
  std::vector<Edge> links;
  for (std::uint32_t i = 0; i < t.node_count(); ++i) links.push_back(Edge{NodeId(i), s});
  return ControlPlane{mode, std::move(links), s};
}

}  // namespace qlink
