#pragma once

// In-memory knowledge graph: entity/relation indices, deduplicated triples,
// an undirected neighbor index, and a surface-form alias dictionary.
// Immutable after load; safe to share read-only.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ckann/common.hpp"

namespace ckann {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId head;
  RelationId relation;
  EntityId tail;

  bool operator==(const Triple&) const = default;
  bool operator<(const Triple& o) const {
    return std::tie(head, relation, tail) < std::tie(o.head, o.relation, o.tail);
  }
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const {
    std::uint64_t x = (std::uint64_t(t.head) << 40) ^
                      (std::uint64_t(t.relation) << 20) ^ std::uint64_t(t.tail);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    return static_cast<std::size_t>(x ^ (x >> 27));
  }
};

class KnowledgeGraph {
 public:
  EntityId intern_entity(const std::string& name) {
    auto it = entity_index_.find(name);
    if (it != entity_index_.end()) return it->second;
    EntityId id = static_cast<EntityId>(entity_names_.size());
    entity_names_.push_back(name);
    entity_index_.emplace(name, id);
    return id;
  }

  RelationId intern_relation(const std::string& name) {
    auto it = relation_index_.find(name);
    if (it != relation_index_.end()) return it->second;
    RelationId id = static_cast<RelationId>(relation_names_.size());
    relation_names_.push_back(name);
    relation_index_.emplace(name, id);
    return id;
  }

  // Duplicates are ignored. Self-loops are stored but never enter the
  // neighbor index; the graph layer adds self-connections itself.
  void add_triple(Triple t) {
    if (!triple_set_.insert(t).second) return;
    triples_.push_back(t);
    if (t.head != t.tail) {
      neighbor_index_[t.head].insert(t.tail);
      neighbor_index_[t.tail].insert(t.head);
    }
  }

  bool has_entity(const std::string& name) const {
    return entity_index_.count(name) != 0;
  }
  bool has_triple(const Triple& t) const { return triple_set_.count(t) != 0; }

  EntityId entity_id(const std::string& name) const {
    auto it = entity_index_.find(name);
    if (it == entity_index_.end()) throw UnknownEntity(name);
    return it->second;
  }

  const std::string& entity_name(EntityId id) const {
    if (id >= entity_names_.size())
      throw UnknownEntity("id " + std::to_string(id));
    return entity_names_[id];
  }

  const std::string& relation_name(RelationId id) const {
    if (id >= relation_names_.size())
      throw UnknownEntity("relation id " + std::to_string(id));
    return relation_names_[id];
  }

  std::size_t n_entities() const { return entity_names_.size(); }
  std::size_t n_relations() const { return relation_names_.size(); }
  const std::vector<Triple>& triples() const { return triples_; }
  const std::vector<std::string>& entity_names() const { return entity_names_; }
  const std::vector<std::string>& relation_names() const {
    return relation_names_;
  }

  // Undirected one-hop neighborhood, excluding the entity itself.
  const std::set<EntityId>& neighbors(EntityId e) const {
    if (e >= entity_names_.size())
      throw UnknownEntity("id " + std::to_string(e));
    auto it = neighbor_index_.find(e);
    if (it == neighbor_index_.end()) return empty_set_;
    return it->second;
  }

  const std::set<EntityId>& neighbors(const std::string& name) const {
    return neighbors(entity_id(name));
  }

  bool adjacent(EntityId a, EntityId b) const {
    auto it = neighbor_index_.find(a);
    return it != neighbor_index_.end() && it->second.count(b) != 0;
  }

 private:
  std::vector<std::string> entity_names_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::unordered_map<std::string, RelationId> relation_index_;
  std::vector<Triple> triples_;
  std::unordered_set<Triple, TripleHash> triple_set_;
  std::map<EntityId, std::set<EntityId>> neighbor_index_;
  inline static const std::set<EntityId> empty_set_{};
};

// One alias entry: candidate entity with its prior.
struct AliasCandidate {
  EntityId entity;
  double prior;
};

class AliasDictionary {
 public:
  // Candidates for one surface, descending prior (ties: ascending id).
  void add(const std::string& surface, EntityId entity, double prior) {
    auto& list = entries_[lowercase(surface)];
    list.push_back({entity, prior});
    std::stable_sort(list.begin(), list.end(),
                     [](const AliasCandidate& a, const AliasCandidate& b) {
                       if (a.prior != b.prior) return a.prior > b.prior;
                       return a.entity < b.entity;
                     });
  }

  const std::vector<AliasCandidate>* lookup(const std::string& surface) const {
    auto it = entries_.find(lowercase(surface));
    if (it == entries_.end()) return nullptr;
    return &it->second;
  }

  std::size_t size() const { return entries_.size(); }

 private:
  std::unordered_map<std::string, std::vector<AliasCandidate>> entries_;
};

// Triples file: one "head\trelation\ttail" per line, '#' comments skipped.
inline KnowledgeGraph load_triples(const std::string& path) {
  auto lines = read_lines(path);
  KnowledgeGraph kg;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty() || line[0] == '#') continue;
    auto fields = split(line, '\t');
    if (fields.size() != 3)
      throw MalformedTriple(i + 1, "expected 3 tab-separated fields, got " +
                                       std::to_string(fields.size()));
    for (const auto& f : fields)
      if (trim(f).empty()) throw MalformedTriple(i + 1, "empty field");
    EntityId h = kg.intern_entity(fields[0]);
    RelationId r = kg.intern_relation(fields[1]);
    EntityId t = kg.intern_entity(fields[2]);
    kg.add_triple({h, r, t});
  }
  return kg;
}

inline void save_triples(const KnowledgeGraph& kg, const std::string& path) {
  std::string out;
  for (const auto& t : kg.triples()) {
    out += kg.entity_name(t.head);
    out += '\t';
    out += kg.relation_name(t.relation);
    out += '\t';
    out += kg.entity_name(t.tail);
    out += '\n';
  }
  write_file(path, out);
}

// Alias file: "surface\tentity\tprior" per line, '#' comments skipped.
inline AliasDictionary load_aliases(const std::string& path,
                                    const KnowledgeGraph& kg) {
  auto lines = read_lines(path);
  AliasDictionary dict;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty() || line[0] == '#') continue;
    auto fields = split(line, '\t');
    if (fields.size() != 3)
      throw MalformedAlias(i + 1, "expected 3 tab-separated fields, got " +
                                      std::to_string(fields.size()));
    double prior;
    try {
      std::size_t pos = 0;
      prior = std::stod(fields[2], &pos);
      if (pos != fields[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw MalformedAlias(i + 1, "prior does not parse: " + fields[2]);
    }
    if (prior < 0.0 || prior > 1.0)
      throw MalformedAlias(i + 1, "prior out of [0,1]: " + fields[2]);
    if (!kg.has_entity(fields[1])) throw UnknownEntity(fields[1]);
    dict.add(fields[0], kg.entity_id(fields[1]), prior);
  }
  return dict;
}

// Keeps floor(keep_ratio * n) uniformly sampled triples. Entity and relation
// indices are copied verbatim so embedding rows stay aligned.
inline KnowledgeGraph subsample(const KnowledgeGraph& kg, double keep_ratio,
                                std::uint64_t seed) {
  if (keep_ratio <= 0.0 || keep_ratio > 1.0)
    throw ConfigError("keep_ratio must be in (0,1]");
  KnowledgeGraph out;
  for (const auto& name : kg.entity_names()) out.intern_entity(name);
  for (const auto& name : kg.relation_names()) out.intern_relation(name);

  std::size_t n = kg.triples().size();
  // Nudge before flooring so decimal ratios like 0.2 * 10 hit their exact
  // integer despite binary rounding.
  auto keep =
      static_cast<std::size_t>(keep_ratio * static_cast<double>(n) + 1e-9);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  order.resize(keep);
  std::sort(order.begin(), order.end());  // keep original triple order
  for (auto i : order) out.add_triple(kg.triples()[i]);
  return out;
}

}  // namespace ckann
