#pragma once

// Per-sentence entity graphs: mentioned entities plus capped one-hop KG
// neighbors, window edges over the mention sequence for p in {2, 3, L},
// and the symmetric-normalized propagation operator with self-connections.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "ckann/common.hpp"
#include "ckann/kg.hpp"
#include "ckann/linking.hpp"

namespace ckann {

// p = 2 or 3 select window cliques of that width; kWindowAll connects every
// mention pair.
inline constexpr int kWindowAll = -1;

enum class NodeRole { Original, AddedNeighbor };
enum class EdgeProvenance { OriginalEdge, NewEdge };

struct GraphEdge {
  std::size_t a;  // node indices, a < b
  std::size_t b;
  EdgeProvenance provenance;

  bool operator<(const GraphEdge& o) const {
    return std::tie(a, b) < std::tie(o.a, o.b);
  }
  bool operator==(const GraphEdge& o) const { return a == o.a && b == o.b; }
};

struct EntityGraph {
  int p = 2;
  std::vector<EntityId> node_entities;  // originals first, in mention order
  std::vector<NodeRole> node_roles;
  std::vector<GraphEdge> edges;  // sorted, unique, no self-loops
  // Node index per mention-level position (duplicate entities share a node).
  std::vector<std::size_t> mention_nodes;

  std::size_t n_nodes() const { return node_entities.size(); }
  std::size_t n_originals() const {
    return std::count(node_roles.begin(), node_roles.end(),
                      NodeRole::Original);
  }
};

// Dense D^{-1/2} (A + I) D^{-1/2}; symmetric, spectrum within [-1, 1].
struct GraphOperator {
  std::size_t n = 0;
  std::vector<double> matrix;  // row-major n x n

  double at(std::size_t i, std::size_t j) const { return matrix[i * n + j]; }
};

inline EntityGraph build_entity_graph(const KnowledgeSequence& seq,
                                      const KnowledgeGraph& kg, int p,
                                      std::size_t max_neighbors_per_node = 16) {
  if (seq.mention_level.empty()) throw EmptyKnowledgeSequence();
  if (p != 2 && p != 3 && p != kWindowAll)
    throw ConfigError("entity graph p must be 2, 3, or L");

  EntityGraph g;
  g.p = p;

  // Original nodes: distinct mention-level entities, first-mention order.
  // Entities outside the KG index become isolated placeholder nodes.
  for (EntityId e : seq.mention_level) {
    auto it = std::find(g.node_entities.begin(), g.node_entities.end(), e);
    std::size_t node;
    if (it == g.node_entities.end()) {
      node = g.node_entities.size();
      g.node_entities.push_back(e);
      g.node_roles.push_back(NodeRole::Original);
    } else {
      node = static_cast<std::size_t>(it - g.node_entities.begin());
    }
    g.mention_nodes.push_back(node);
  }
  const std::size_t n_orig = g.node_entities.size();

  std::set<GraphEdge> edges;
  auto add_edge = [&edges](std::size_t a, std::size_t b, EdgeProvenance prov) {
    if (a == b) return;
    if (a > b) std::swap(a, b);
    edges.insert({a, b, prov});  // existing provenance wins
  };

  auto in_kg = [&kg](EntityId e) { return e < kg.n_entities(); };

  // KG edges among original nodes.
  for (std::size_t i = 0; i < n_orig; ++i)
    for (std::size_t j = i + 1; j < n_orig; ++j)
      if (in_kg(g.node_entities[i]) && in_kg(g.node_entities[j]) &&
          kg.adjacent(g.node_entities[i], g.node_entities[j]))
        add_edge(i, j, EdgeProvenance::OriginalEdge);

  // One-hop neighbors: each original selects its first max_neighbors_per_node
  // non-original neighbors by ascending entity id.
  std::set<EntityId> original_set(g.node_entities.begin(),
                                  g.node_entities.end());
  std::set<EntityId> added;
  for (std::size_t i = 0; i < n_orig; ++i) {
    if (!in_kg(g.node_entities[i])) continue;
    std::size_t taken = 0;
    for (EntityId nb : kg.neighbors(g.node_entities[i])) {
      if (taken >= max_neighbors_per_node) break;
      if (original_set.count(nb)) continue;
      added.insert(nb);
      ++taken;
    }
  }
  for (EntityId e : added) {  // ascending id
    g.node_entities.push_back(e);
    g.node_roles.push_back(NodeRole::AddedNeighbor);
  }
  // Reserve every KG edge between an original node and a selected neighbor.
  for (std::size_t i = 0; i < n_orig; ++i) {
    if (!in_kg(g.node_entities[i])) continue;
    for (std::size_t j = n_orig; j < g.node_entities.size(); ++j)
      if (kg.adjacent(g.node_entities[i], g.node_entities[j]))
        add_edge(i, j, EdgeProvenance::OriginalEdge);
  }

  // Window edges over the mention sequence. Fewer mentions than the window
  // width degrade to a clique over all of them.
  const auto& m = g.mention_nodes;
  const std::size_t lk = m.size();
  std::size_t window =
      p == kWindowAll ? lk : std::min<std::size_t>(static_cast<std::size_t>(p), lk);
  if (window >= 2) {
    for (std::size_t start = 0; start + window <= lk; ++start)
      for (std::size_t i = start; i < start + window; ++i)
        for (std::size_t j = i + 1; j < start + window; ++j)
          add_edge(m[i], m[j], EdgeProvenance::NewEdge);
  }

  g.edges.assign(edges.begin(), edges.end());
  return g;
}

inline std::vector<EntityGraph> build_entity_graph_variants(
    const KnowledgeSequence& seq, const KnowledgeGraph& kg,
    std::size_t max_neighbors_per_node = 16) {
  return {build_entity_graph(seq, kg, 2, max_neighbors_per_node),
          build_entity_graph(seq, kg, 3, max_neighbors_per_node),
          build_entity_graph(seq, kg, kWindowAll, max_neighbors_per_node)};
}

inline GraphOperator normalized_operator(const EntityGraph& graph) {
  std::size_t n = graph.n_nodes();
  if (n == 0) throw EmptyKnowledgeSequence();
  GraphOperator op;
  op.n = n;
  op.matrix.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) op.matrix[i * n + i] = 1.0;
  for (const auto& e : graph.edges) {
    op.matrix[e.a * n + e.b] = 1.0;
    op.matrix[e.b * n + e.a] = 1.0;
  }
  std::vector<double> dinv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += op.matrix[i * n + j];
    dinv_sqrt[i] = 1.0 / std::sqrt(deg);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      op.matrix[i * n + j] *= dinv_sqrt[i] * dinv_sqrt[j];
  return op;
}

// --- optional on-disk cache --------------------------------------------------
// One record per graph:
//   "graph <sentence-id> <p> <n_nodes>"
//   "nodes <id:role> ..."        role o = original, n = added neighbor
//   "mentions <node-index> ..."
//   "edges <a-b:prov> ..."       prov o = original edge, n = new edge

inline std::string graph_cache_record(const std::string& sentence_id,
                                      const EntityGraph& g) {
  std::string out = "graph " + sentence_id + " " +
                    (g.p == kWindowAll ? std::string("L") : std::to_string(g.p)) +
                    " " + std::to_string(g.n_nodes()) + "\n";
  out += "nodes";
  for (std::size_t i = 0; i < g.n_nodes(); ++i)
    out += " " + std::to_string(g.node_entities[i]) +
           (g.node_roles[i] == NodeRole::Original ? ":o" : ":n");
  out += "\nmentions";
  for (auto m : g.mention_nodes) out += " " + std::to_string(m);
  out += "\nedges";
  for (const auto& e : g.edges)
    out += " " + std::to_string(e.a) + "-" + std::to_string(e.b) +
           (e.provenance == EdgeProvenance::OriginalEdge ? ":o" : ":n");
  out += "\n";
  return out;
}

inline EntityGraph parse_graph_cache_record(
    const std::vector<std::string>& lines, std::size_t& pos,
    std::string* sentence_id_out = nullptr) {
  if (pos + 4 > lines.size())
    throw FormatError("graph cache: truncated record");
  auto head = split_ws(lines[pos]);
  if (head.size() != 4 || head[0] != "graph")
    throw FormatError("graph cache: bad header: " + lines[pos]);
  EntityGraph g;
  if (sentence_id_out) *sentence_id_out = head[1];
  g.p = head[2] == "L" ? kWindowAll : std::stoi(head[2]);

  auto nodes = split_ws(lines[pos + 1]);
  if (nodes.empty() || nodes[0] != "nodes")
    throw FormatError("graph cache: expected nodes line");
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    auto sep = nodes[i].find(':');
    if (sep == std::string::npos)
      throw FormatError("graph cache: bad node " + nodes[i]);
    g.node_entities.push_back(
        static_cast<EntityId>(std::stoul(nodes[i].substr(0, sep))));
    g.node_roles.push_back(nodes[i][sep + 1] == 'o' ? NodeRole::Original
                                                    : NodeRole::AddedNeighbor);
  }
  auto mentions = split_ws(lines[pos + 2]);
  if (mentions.empty() || mentions[0] != "mentions")
    throw FormatError("graph cache: expected mentions line");
  for (std::size_t i = 1; i < mentions.size(); ++i)
    g.mention_nodes.push_back(std::stoul(mentions[i]));
  auto edges = split_ws(lines[pos + 3]);
  if (edges.empty() || edges[0] != "edges")
    throw FormatError("graph cache: expected edges line");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    auto dash = edges[i].find('-');
    auto colon = edges[i].find(':');
    if (dash == std::string::npos || colon == std::string::npos)
      throw FormatError("graph cache: bad edge " + edges[i]);
    g.edges.push_back(
        {std::stoul(edges[i].substr(0, dash)),
         std::stoul(edges[i].substr(dash + 1, colon - dash - 1)),
         edges[i][colon + 1] == 'o' ? EdgeProvenance::OriginalEdge
                                    : EdgeProvenance::NewEdge});
  }
  pos += 4;
  return g;
}

}  // namespace ckann
