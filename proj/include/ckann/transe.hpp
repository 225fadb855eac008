#pragma once

// Translation-based knowledge embeddings: margin ranking loss over corrupted
// triples, mini-batch SGD, entity rows renormalized to unit L2 after every
// epoch. Single-threaded and deterministic given the seed.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ckann/common.hpp"
#include "ckann/kg.hpp"

namespace ckann {

enum class Norm { L1, L2 };

struct TransEConfig {
  std::size_t dim = 64;
  double margin = 1.0;
  Norm norm = Norm::L2;
  double learning_rate = 0.01;
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

struct EmbeddingTable {
  std::size_t dim = 0;
  std::size_t n_entities = 0;
  std::size_t n_relations = 0;
  // Row-major: entity_vectors[e * dim + j], relation_vectors[r * dim + j].
  std::vector<double> entity_vectors;
  std::vector<double> relation_vectors;

  const double* entity(std::size_t e) const {
    return entity_vectors.data() + e * dim;
  }
  double* entity(std::size_t e) { return entity_vectors.data() + e * dim; }
  const double* relation(std::size_t r) const {
    return relation_vectors.data() + r * dim;
  }
  double* relation(std::size_t r) { return relation_vectors.data() + r * dim; }
};

namespace detail {
inline void l2_normalize_row(double* row, std::size_t dim) {
  double s = 0.0;
  for (std::size_t j = 0; j < dim; ++j) s += row[j] * row[j];
  s = std::sqrt(s);
  if (s > 0.0)
    for (std::size_t j = 0; j < dim; ++j) row[j] /= s;
}
}  // namespace detail

// Uniform init in [-6/sqrt(d), +6/sqrt(d)], entity rows normalized to unit L2.
inline EmbeddingTable init_embeddings(const KnowledgeGraph& kg,
                                      const TransEConfig& config) {
  EmbeddingTable t;
  t.dim = config.dim;
  t.n_entities = kg.n_entities();
  t.n_relations = kg.n_relations();
  double bound = 6.0 / std::sqrt(static_cast<double>(config.dim));
  Rng rng = Rng(config.seed).derive(0x7261);
  t.entity_vectors.resize(t.n_entities * t.dim);
  for (auto& x : t.entity_vectors) x = rng.uniform(-bound, bound);
  t.relation_vectors.resize(t.n_relations * t.dim);
  for (auto& x : t.relation_vectors) x = rng.uniform(-bound, bound);
  for (std::size_t e = 0; e < t.n_entities; ++e)
    detail::l2_normalize_row(t.entity(e), t.dim);
  return t;
}

inline double transe_distance(const std::vector<double>& h,
                              const std::vector<double>& r,
                              const std::vector<double>& t, Norm norm) {
  if (h.size() != r.size() || h.size() != t.size())
    throw DimensionMismatch("transe_distance: vector sizes differ");
  double acc = 0.0;
  for (std::size_t j = 0; j < h.size(); ++j) {
    double d = h[j] + r[j] - t[j];
    acc += norm == Norm::L1 ? std::abs(d) : d * d;
  }
  return norm == Norm::L1 ? acc : std::sqrt(acc);
}

inline double transe_distance(const EmbeddingTable& tab, const Triple& t,
                              Norm norm) {
  double acc = 0.0;
  const double* h = tab.entity(t.head);
  const double* r = tab.relation(t.relation);
  const double* e = tab.entity(t.tail);
  for (std::size_t j = 0; j < tab.dim; ++j) {
    double d = h[j] + r[j] - e[j];
    acc += norm == Norm::L1 ? std::abs(d) : d * d;
  }
  return norm == Norm::L1 ? acc : std::sqrt(acc);
}

// Corrupts head or tail (coin flip) with a uniform entity so that the result
// is not a known triple; gives up after 100 draws and returns the last one.
inline Triple negative_sample(const Triple& triple, const KnowledgeGraph& kg,
                              Rng& rng) {
  Triple corrupted = triple;
  for (int attempt = 0; attempt < 100; ++attempt) {
    corrupted = triple;
    auto e = static_cast<EntityId>(rng.uniform_index(kg.n_entities()));
    if (rng.coin())
      corrupted.head = e;
    else
      corrupted.tail = e;
    if (!kg.has_triple(corrupted)) return corrupted;
  }
  return corrupted;
}

struct TransEResult {
  EmbeddingTable table;
  std::vector<double> loss_trace;  // mean margin loss per epoch
};

inline TransEResult train_transe(const KnowledgeGraph& kg,
                                 const TransEConfig& config) {
  TransEResult result;
  result.table = init_embeddings(kg, config);
  EmbeddingTable& tab = result.table;
  const std::size_t dim = tab.dim;
  const auto& triples = kg.triples();
  if (triples.empty()) return result;

  Rng rng = Rng(config.seed).derive(0x7262);
  std::vector<std::size_t> order(triples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<double> dpos(dim), dneg(dim);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t idx : order) {
      const Triple& pos = triples[idx];
      Triple neg = negative_sample(pos, kg, rng);

      auto residual = [&](const Triple& t, std::vector<double>& out) {
        const double* h = tab.entity(t.head);
        const double* r = tab.relation(t.relation);
        const double* e = tab.entity(t.tail);
        for (std::size_t j = 0; j < dim; ++j) out[j] = h[j] + r[j] - e[j];
      };
      residual(pos, dpos);
      residual(neg, dneg);

      auto norm_of = [&](const std::vector<double>& d) {
        double acc = 0.0;
        for (double x : d) acc += config.norm == Norm::L1 ? std::abs(x) : x * x;
        return config.norm == Norm::L1 ? acc : std::sqrt(acc);
      };
      double npos = norm_of(dpos);
      double nneg = norm_of(dneg);
      double loss = config.margin + npos - nneg;
      if (loss <= 0.0) continue;
      epoch_loss += loss;

      // d||v||/dv: v/||v|| for L2, sign(v) for L1.
      auto apply = [&](const Triple& t, const std::vector<double>& d,
                       double nrm, double sign) {
        double lr = config.learning_rate;
        for (std::size_t j = 0; j < dim; ++j) {
          double grad;
          if (config.norm == Norm::L1)
            grad = d[j] > 0 ? 1.0 : (d[j] < 0 ? -1.0 : 0.0);
          else
            grad = nrm > 0 ? d[j] / nrm : 0.0;
          grad *= sign * lr;
          tab.entity(t.head)[j] -= grad;
          tab.relation(t.relation)[j] -= grad;
          tab.entity(t.tail)[j] += grad;
        }
      };
      apply(pos, dpos, npos, 1.0);
      apply(neg, dneg, nneg, -1.0);
    }
    for (std::size_t e = 0; e < tab.n_entities; ++e)
      detail::l2_normalize_row(tab.entity(e), dim);
    result.loss_trace.push_back(epoch_loss / static_cast<double>(triples.size()));
  }
  return result;
}

// Text format: header "n_entities n_relations dim", then one row per entity
// and one per relation, whitespace-separated, in index order.
inline void save_table(const EmbeddingTable& t, const std::string& path) {
  std::string out = std::to_string(t.n_entities) + " " +
                    std::to_string(t.n_relations) + " " +
                    std::to_string(t.dim) + "\n";
  auto dump = [&](const std::vector<double>& rows, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < t.dim; ++j) {
        if (j) out += ' ';
        out += fmt_double(rows[i * t.dim + j]);
      }
      out += '\n';
    }
  };
  dump(t.entity_vectors, t.n_entities);
  dump(t.relation_vectors, t.n_relations);
  write_file(path, out);
}

inline EmbeddingTable load_table(const std::string& path,
                                 const KnowledgeGraph* expect = nullptr,
                                 std::size_t expect_dim = 0) {
  auto lines = read_lines(path);
  if (lines.empty()) throw FormatError(path + ": missing header");
  auto header = split_ws(lines[0]);
  if (header.size() != 3)
    throw FormatError(path + ": header must be 'n_entities n_relations dim'");
  EmbeddingTable t;
  try {
    t.n_entities = std::stoul(header[0]);
    t.n_relations = std::stoul(header[1]);
    t.dim = std::stoul(header[2]);
  } catch (const std::exception&) {
    throw FormatError(path + ": header does not parse");
  }
  if (expect) {
    if (t.n_entities != expect->n_entities())
      throw FormatError(path + ": entity count " + std::to_string(t.n_entities) +
                        " does not match graph (" +
                        std::to_string(expect->n_entities()) + ")");
    if (t.n_relations != expect->n_relations())
      throw FormatError(path + ": relation count does not match graph");
  }
  if (expect_dim != 0 && t.dim != expect_dim)
    throw FormatError(path + ": dim " + std::to_string(t.dim) +
                      " does not match expected " + std::to_string(expect_dim));
  std::size_t need = t.n_entities + t.n_relations;
  std::size_t have = 0;
  t.entity_vectors.reserve(t.n_entities * t.dim);
  t.relation_vectors.reserve(t.n_relations * t.dim);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    auto vals = split_ws(lines[i]);
    if (vals.size() != t.dim)
      throw FormatError(path + ": row " + std::to_string(i) + " has " +
                        std::to_string(vals.size()) + " values, expected " +
                        std::to_string(t.dim));
    auto& dst = have < t.n_entities ? t.entity_vectors : t.relation_vectors;
    for (const auto& s : vals) {
      try {
        dst.push_back(std::stod(s));
      } catch (const std::exception&) {
        throw FormatError(path + ": value does not parse: " + s);
      }
    }
    ++have;
  }
  if (have != need)
    throw FormatError(path + ": expected " + std::to_string(need) +
                      " rows, got " + std::to_string(have));
  return t;
}

}  // namespace ckann
