#ifndef AISC_GRAPH_HPP
#define AISC_GRAPH_HPP

// Directed-graph model of an AI supply chain. Nodes are components (models or
// datasets) owned by organizations; an edge (u, v) means v was produced using u.

#include <algorithm>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "aisc/errors.hpp"
#include "json.hpp"

namespace aisc {

using NodeId = int;
using Edge = std::pair<NodeId, NodeId>;

enum class NodeKind { model, dataset };

inline const char* to_string(NodeKind k) { return k == NodeKind::model ? "model" : "dataset"; }

inline NodeKind node_kind_from_string(const std::string& s) {
  if (s == "model") return NodeKind::model;
  if (s == "dataset") return NodeKind::dataset;
  throw ParseError("unknown node kind '" + s + "'");
}

struct NodeRecord {
  NodeId id = 0;
  NodeKind kind = NodeKind::model;
  std::string owner;
  int level = 0;  // hop distance to the downstream sink

  bool operator==(const NodeRecord&) const = default;
};

class SupplyChainGraph {
 public:
  SupplyChainGraph() = default;

  /// Appends a node with the next dense id.
  NodeId add_node(NodeKind kind = NodeKind::model, std::string owner = {}, int level = 0) {
    NodeId id = nodes_.empty() ? 0 : nodes_.rbegin()->first + 1;
    insert_node(NodeRecord{id, kind, std::move(owner), level});
    return id;
  }

  /// Inserts a node carrying an explicit id (used when copying subgraphs and
  /// when loading from JSON).
  void insert_node(NodeRecord rec) {
    if (rec.id < 0) throw ArgumentError("node id must be non-negative");
    if (rec.level < 0) throw ArgumentError("node level must be non-negative");
    if (nodes_.count(rec.id)) throw ArgumentError("duplicate node id " + std::to_string(rec.id));
    const NodeId id = rec.id;
    nodes_.emplace(id, std::move(rec));
    parents_[id];
    children_[id];
  }

  void add_edge(NodeId src, NodeId dst) {
    require(src);
    require(dst);
    if (src == dst) throw ArgumentError("self-loop on node " + std::to_string(src));
    if (nodes_.at(dst).kind == NodeKind::dataset)
      throw ArgumentError("dataset node " + std::to_string(dst) + " cannot have parents");
    auto& ps = parents_[dst];
    if (std::find(ps.begin(), ps.end(), src) != ps.end())
      throw ArgumentError("duplicate edge " + std::to_string(src) + "->" + std::to_string(dst));
    ps.insert(std::upper_bound(ps.begin(), ps.end(), src), src);
    auto& cs = children_[src];
    cs.insert(std::upper_bound(cs.begin(), cs.end(), dst), dst);
    edges_.emplace_back(src, dst);
  }

  bool contains(NodeId v) const { return nodes_.count(v) != 0; }

  const NodeRecord& node(NodeId v) const {
    require(v);
    return nodes_.at(v);
  }

  /// Node ids in ascending order.
  std::vector<NodeId> node_ids() const {
    std::vector<NodeId> out;
    out.reserve(nodes_.size());
    for (const auto& [id, _] : nodes_) out.push_back(id);
    return out;
  }

  std::vector<NodeRecord> nodes() const {
    std::vector<NodeRecord> out;
    out.reserve(nodes_.size());
    for (const auto& [_, rec] : nodes_) out.push_back(rec);
    return out;
  }

  /// Edges in insertion order.
  const std::vector<Edge>& edges() const { return edges_; }

  std::size_t size() const { return nodes_.size(); }

  /// Parents of v, ascending by id.
  const std::vector<NodeId>& parent_list(NodeId v) const {
    require(v);
    return parents_.at(v);
  }

  /// Children of v, ascending by id.
  const std::vector<NodeId>& child_list(NodeId v) const {
    require(v);
    return children_.at(v);
  }

  bool has_edge(NodeId src, NodeId dst) const {
    auto it = parents_.find(dst);
    if (it == parents_.end()) return false;
    return std::binary_search(it->second.begin(), it->second.end(), src);
  }

 private:
  void require(NodeId v) const {
    if (!nodes_.count(v)) throw LookupError("unknown node id " + std::to_string(v));
  }

  std::map<NodeId, NodeRecord> nodes_;
  std::map<NodeId, std::vector<NodeId>> parents_;
  std::map<NodeId, std::vector<NodeId>> children_;
  std::vector<Edge> edges_;
};

inline std::set<NodeId> parents(const SupplyChainGraph& g, NodeId v) {
  const auto& ps = g.parent_list(v);
  return {ps.begin(), ps.end()};
}

/// Transitive closure of parents(). v is included only if it lies on a cycle.
inline std::set<NodeId> ancestors(const SupplyChainGraph& g, NodeId v) {
  std::set<NodeId> seen;
  std::deque<NodeId> frontier(g.parent_list(v).begin(), g.parent_list(v).end());
  while (!frontier.empty()) {
    NodeId u = frontier.front();
    frontier.pop_front();
    if (!seen.insert(u).second) continue;
    for (NodeId p : g.parent_list(u))
      if (!seen.count(p)) frontier.push_back(p);
  }
  return seen;
}

struct VisibleSubgraph {
  SupplyChainGraph graph;
  /// Edges between v and its ancestors that v cannot see within m hops.
  std::vector<Edge> hidden_edges;
};

/// Induced subgraph on v and every ancestor within m reverse hops. Edges among
/// {v} ∪ ancestors(v) that fall outside it are reported as hidden interactions.
inline VisibleSubgraph visible_subgraph(const SupplyChainGraph& g, NodeId v, int m) {
  if (m < 0) throw ArgumentError("hop count must be non-negative");
  std::map<NodeId, int> dist{{v, 0}};
  std::deque<NodeId> frontier{v};
  while (!frontier.empty()) {
    NodeId u = frontier.front();
    frontier.pop_front();
    const int du = dist[u];
    if (du == m) continue;
    for (NodeId p : g.parent_list(u)) {
      if (dist.count(p)) continue;
      dist[p] = du + 1;
      frontier.push_back(p);
    }
  }

  VisibleSubgraph out;
  for (const auto& [id, _] : dist) out.graph.insert_node(g.node(id));
  for (const auto& [s, t] : g.edges())
    if (dist.count(s) && dist.count(t)) out.graph.add_edge(s, t);

  std::set<NodeId> closure = ancestors(g, v);
  closure.insert(v);
  for (const auto& e : g.edges()) {
    if (closure.count(e.first) && closure.count(e.second) &&
        !out.graph.has_edge(e.first, e.second))
      out.hidden_edges.push_back(e);
  }
  return out;
}

/// All simple directed cycles. Each cycle starts at its smallest node id and
/// cycles are listed in lexicographic order of their node sequences.
inline std::vector<std::vector<NodeId>> find_cycles(const SupplyChainGraph& g) {
  std::vector<std::vector<NodeId>> cycles;
  std::vector<NodeId> path;
  std::set<NodeId> on_path;

  std::function<void(NodeId, NodeId)> dfs = [&](NodeId start, NodeId u) {
    for (NodeId c : g.child_list(u)) {
      if (c == start) {
        cycles.push_back(path);
      } else if (c > start && !on_path.count(c)) {
        path.push_back(c);
        on_path.insert(c);
        dfs(start, c);
        on_path.erase(c);
        path.pop_back();
      }
    }
  };

  for (NodeId s : g.node_ids()) {
    path = {s};
    on_path = {s};
    dfs(s, s);
  }
  std::sort(cycles.begin(), cycles.end());
  return cycles;
}

/// Unnormalized directed betweenness: for every ordered pair (s, t) with
/// s != t, each intermediate node on a shortest s->t path receives the
/// fraction of shortest paths through it. Brandes' accumulation.
inline std::map<NodeId, double> betweenness_centrality(const SupplyChainGraph& g) {
  const auto ids = g.node_ids();
  std::map<NodeId, double> cb;
  for (NodeId v : ids) cb[v] = 0.0;

  for (NodeId s : ids) {
    std::vector<NodeId> order;
    std::map<NodeId, std::vector<NodeId>> pred;
    std::map<NodeId, double> sigma;
    std::map<NodeId, int> dist;
    for (NodeId v : ids) {
      sigma[v] = 0.0;
      dist[v] = -1;
    }
    sigma[s] = 1.0;
    dist[s] = 0;
    std::deque<NodeId> q{s};
    while (!q.empty()) {
      NodeId v = q.front();
      q.pop_front();
      order.push_back(v);
      for (NodeId w : g.child_list(v)) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          q.push_back(w);
        }
        if (dist[w] == dist[v] + 1) {
          sigma[w] += sigma[v];
          pred[w].push_back(v);
        }
      }
    }
    std::map<NodeId, double> delta;
    for (NodeId v : ids) delta[v] = 0.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      NodeId w = *it;
      for (NodeId v : pred[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
      if (w != s) cb[w] += delta[w];
    }
  }
  return cb;
}

/// Kahn's algorithm, smallest ready id first. Throws CycleError with a witness.
inline std::vector<NodeId> topological_order(const SupplyChainGraph& g) {
  std::map<NodeId, std::size_t> indeg;
  std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
  for (NodeId v : g.node_ids()) {
    indeg[v] = g.parent_list(v).size();
    if (indeg[v] == 0) ready.push(v);
  }
  std::vector<NodeId> order;
  order.reserve(g.size());
  while (!ready.empty()) {
    NodeId v = ready.top();
    ready.pop();
    order.push_back(v);
    for (NodeId c : g.child_list(v))
      if (--indeg[c] == 0) ready.push(c);
  }
  if (order.size() == g.size()) return order;

  // Every unfinished node keeps an unfinished parent; walking parents must revisit.
  NodeId cur = -1;
  for (const auto& [v, d] : indeg)
    if (d > 0) {
      cur = v;
      break;
    }
  std::vector<NodeId> walk;
  std::map<NodeId, std::size_t> pos;
  while (!pos.count(cur)) {
    pos[cur] = walk.size();
    walk.push_back(cur);
    for (NodeId p : g.parent_list(cur))
      if (indeg[p] > 0) {
        cur = p;
        break;
      }
  }
  std::vector<NodeId> witness(walk.begin() + static_cast<std::ptrdiff_t>(pos[cur]), walk.end());
  std::reverse(witness.begin(), witness.end());
  auto mn = std::min_element(witness.begin(), witness.end());
  std::rotate(witness.begin(), mn, witness.end());
  throw CycleError("graph contains a cycle", witness);
}

/// Induced subgraph on the given node set (edges kept when both ends are in it).
inline SupplyChainGraph induced_subgraph(const SupplyChainGraph& g, const std::set<NodeId>& keep) {
  SupplyChainGraph out;
  for (NodeId v : keep) out.insert_node(g.node(v));
  for (const auto& [s, t] : g.edges())
    if (keep.count(s) && keep.count(t)) out.add_edge(s, t);
  return out;
}

inline nlohmann::json to_json(const SupplyChainGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : g.nodes())
    nodes.push_back({{"id", n.id}, {"kind", to_string(n.kind)}, {"owner", n.owner}, {"level", n.level}});
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [s, t] : g.edges()) edges.push_back({s, t});
  return {{"nodes", nodes}, {"edges", edges}};
}

inline SupplyChainGraph graph_from_json(const nlohmann::json& j) {
  SupplyChainGraph g;
  try {
    for (const auto& n : j.at("nodes"))
      g.insert_node(NodeRecord{n.at("id").get<int>(), node_kind_from_string(n.at("kind").get<std::string>()),
                               n.value("owner", std::string{}), n.value("level", 0)});
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw ParseError("edge must be a [src, dst] pair");
      g.add_edge(e[0].get<int>(), e[1].get<int>());
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("malformed graph JSON: ") + ex.what());
  }
  return g;
}

}  // namespace aisc

#endif  // AISC_GRAPH_HPP
