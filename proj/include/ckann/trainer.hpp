#pragma once

// Dataset encoding (tokens -> ids, entity linking, entity graphs) and the
// training loop: Adam, early stopping on dev MAP, deterministic given the
// config seed.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ckann/common.hpp"
#include "ckann/data.hpp"
#include "ckann/entity_graph.hpp"
#include "ckann/kg.hpp"
#include "ckann/linking.hpp"
#include "ckann/metrics.hpp"
#include "ckann/model.hpp"
#include "ckann/transe.hpp"

namespace ckann {

struct EncodedQuestion {
  std::string qid;
  EncodedSentence question;
  std::vector<EncodedSentence> candidates;
  std::vector<std::array<double, 4>> x_feats;
  std::vector<int> labels;
};

class Pipeline {
 public:
  Pipeline(const KnowledgeGraph& kg, const AliasDictionary& aliases,
           const EmbeddingTable& entities, const WordTable& words,
           ModelConfig cfg)
      : kg_(kg), aliases_(aliases), entities_(entities), words_(words),
        cfg_(std::move(cfg)) {
    if (const char* dir = std::getenv("CKANN_CACHE_DIR")) cache_dir_ = dir;
    if (uses_graphs()) {
      kg_fingerprint_ = fnv1a64(std::to_string(kg_.triples().size()));
      for (const auto& t : kg_.triples())
        kg_fingerprint_ =
            fnv1a64(&t, sizeof(Triple), kg_fingerprint_);
    }
  }

  bool uses_graphs() const {
    return cfg_.variant == Variant::CKANN && !cfg_.ablate_knowledge;
  }

  EncodedSentence encode_sentence(
      const std::vector<std::string>& tokens,
      const std::vector<EntityGraph>* pre_graphs = nullptr) const {
    EncodedSentence s;
    s.tokens = tokens;
    if (s.tokens.size() > cfg_.max_len) s.tokens.resize(cfg_.max_len);
    s.token_ids.reserve(s.tokens.size());
    for (const auto& t : s.tokens) s.token_ids.push_back(words_.lookup(t));
    s.kseq = link_sentence(s.tokens, aliases_, cfg_.max_ngram,
                           cfg_.link_threshold, cfg_.K);
    if (uses_graphs() && !s.kseq.mention_level.empty())
      attach_graph(s, pre_graphs);
    return s;
  }

  EncodedQuestion encode_instance(const QAInstance& inst, const IdfTable& idf,
                                  const std::set<std::string>& stopwords) const {
    EncodedQuestion q;
    q.qid = inst.qid;
    q.question = encode_sentence(inst.question_tokens);
    for (const auto& c : inst.candidates) {
      q.candidates.push_back(encode_sentence(c.tokens));
      q.labels.push_back(c.label);
      q.x_feats.push_back(cfg_.use_overlap_features
                              ? overlap_features(inst.question_tokens, c.tokens,
                                                 idf, stopwords)
                              : std::array<double, 4>{0, 0, 0, 0});
    }
    return q;
  }

  // split_tag enables the on-disk entity-graph cache (CKANN_CACHE_DIR) for
  // that split; content-hashed so stale files are ignored.
  std::vector<EncodedQuestion> encode_split(
      const std::vector<QAInstance>& split, const IdfTable& idf,
      const std::set<std::string>& stopwords,
      const std::string& split_tag = "") const {
    std::map<std::size_t, std::vector<EntityGraph>> cached;
    std::string cache_path;
    bool caching = !cache_dir_.empty() && !split_tag.empty() && uses_graphs();
    if (caching) {
      cache_path = cache_dir_ + "/" + split_tag + "_" +
                   hex64(split_cache_key(split)) + ".egraphs";
      if (file_exists(cache_path)) cached = load_graph_cache(cache_path);
    }

    std::vector<EncodedQuestion> out;
    out.reserve(split.size());
    std::size_t sentence_no = 0;
    std::string cache_out;
    bool write_cache = caching && cached.empty();
    auto encode_one = [&](const std::vector<std::string>& tokens) {
      auto it = cached.find(sentence_no);
      EncodedSentence s = encode_sentence(
          tokens, it != cached.end() ? &it->second : nullptr);
      if (write_cache && s.has_graph)
        for (const auto& g : s.graphs_for_cache)
          cache_out += graph_cache_record("s" + std::to_string(sentence_no), g);
      ++sentence_no;
      return s;
    };
    for (const auto& inst : split) {
      EncodedQuestion q;
      q.qid = inst.qid;
      q.question = encode_one(inst.question_tokens);
      for (const auto& c : inst.candidates) {
        q.candidates.push_back(encode_one(c.tokens));
        q.labels.push_back(c.label);
        q.x_feats.push_back(
            cfg_.use_overlap_features
                ? overlap_features(inst.question_tokens, c.tokens, idf,
                                   stopwords)
                : std::array<double, 4>{0, 0, 0, 0});
      }
      out.push_back(std::move(q));
    }
    if (write_cache && !cache_out.empty())
      write_file(cache_path, cache_out);
    return out;
  }

 private:
  std::uint64_t split_cache_key(const std::vector<QAInstance>& split) const {
    std::uint64_t h = fnv1a64(cfg_.canonical_string());
    h = fnv1a64(hex64(kg_fingerprint_), h);
    for (const auto& inst : split) {
      for (const auto& t : inst.question_tokens) h = fnv1a64(t + " ", h);
      for (const auto& c : inst.candidates)
        for (const auto& t : c.tokens) h = fnv1a64(t + " ", h);
    }
    return h;
  }

  static std::map<std::size_t, std::vector<EntityGraph>> load_graph_cache(
      const std::string& path) {
    std::map<std::size_t, std::vector<EntityGraph>> out;
    auto lines = read_lines(path);
    std::size_t pos = 0;
    while (pos < lines.size()) {
      if (trim(lines[pos]).empty()) {
        ++pos;
        continue;
      }
      std::string sid;
      EntityGraph g = parse_graph_cache_record(lines, pos, &sid);
      if (sid.empty() || sid[0] != 's')
        throw FormatError("graph cache: bad sentence id " + sid);
      out[std::stoul(sid.substr(1))].push_back(std::move(g));
    }
    return out;
  }

  void attach_graph(EncodedSentence& s,
                    const std::vector<EntityGraph>* pre_graphs) const {
    std::vector<EntityGraph> graphs =
        pre_graphs && pre_graphs->size() == 3
            ? *pre_graphs
            : build_entity_graph_variants(s.kseq, kg_,
                                          cfg_.max_neighbors_per_node);
    for (const auto& g : graphs)
      if (g.node_entities != graphs[0].node_entities)
        throw NodeSetMismatch("graph variants disagree on node set");
    const auto& nodes = graphs[0].node_entities;
    std::size_t n = nodes.size(), d = entities_.dim;

    // Frozen node features: entity rows, zeros for ids outside the table.
    std::vector<double> feat(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      if (nodes[i] < entities_.n_entities)
        for (std::size_t j = 0; j < d; ++j)
          feat[i * d + j] = entities_.entity(nodes[i])[j];

    for (std::size_t v = 0; v < 3; ++v) {
      GraphOperator op = normalized_operator(graphs[v]);
      std::vector<double> op_feat(n * d, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) {
          double w = op.at(i, k);
          if (w == 0.0) continue;
          for (std::size_t j = 0; j < d; ++j)
            op_feat[i * d + j] += w * feat[k * d + j];
        }
      s.op_feat[v] = Tensor::from({n, d}, std::move(op_feat));
    }
    s.mention_rows = graphs[0].mention_nodes;
    for (EntityId e : s.kseq.mention_level)
      s.mention_names.push_back(e < kg_.n_entities()
                                    ? kg_.entity_name(e)
                                    : "entity" + std::to_string(e));
    s.graphs_for_cache = std::move(graphs);
    s.has_graph = true;
  }

  const KnowledgeGraph& kg_;
  const AliasDictionary& aliases_;
  const EmbeddingTable& entities_;
  const WordTable& words_;
  ModelConfig cfg_;
  std::string cache_dir_;
  std::uint64_t kg_fingerprint_ = 0;
};

// --- evaluation --------------------------------------------------------------

inline std::vector<RankedList> rank_split(Model& model,
                                          const std::vector<EncodedQuestion>& split) {
  std::vector<RankedList> rankings;
  rankings.reserve(split.size());
  for (const auto& q : split) {
    std::vector<double> scores(q.candidates.size());
    for (std::size_t c = 0; c < q.candidates.size(); ++c)
      scores[c] = model.score(q.question, q.candidates[c], q.x_feats[c]);
    rankings.push_back(rank_candidates(q.qid, scores, q.labels));
  }
  return rankings;
}

inline EvalReport evaluate_split(Model& model,
                                 const std::vector<EncodedQuestion>& split) {
  return aggregate_rankings(rank_split(model, split));
}

// --- optimizer ----------------------------------------------------------------

class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& params) {
    const auto& all = params.all();
    if (m_.empty()) {
      m_.resize(all.size());
      v_.resize(all.size());
      for (std::size_t i = 0; i < all.size(); ++i) {
        m_[i].assign(all[i].second.size(), 0.0);
        v_[i].assign(all[i].second.size(), 0.0);
      }
    }
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < all.size(); ++i) {
      Tensor t = all[i].second;
      if (t.grad().empty()) continue;
      auto& vals = t.mutable_values();
      const auto& g = t.grad();
      for (std::size_t j = 0; j < vals.size(); ++j) {
        m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
        v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
        double mhat = m_[i][j] / bc1;
        double vhat = v_[i][j] / bc2;
        vals[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// --- training loop ----------------------------------------------------------------

struct TrainOptions {
  std::size_t epochs = 50;
  std::size_t patience = 10;
  bool early_stopping = true;
  std::function<void(std::size_t epoch, double train_loss, double dev_map)>
      on_epoch;
};

struct TrainResult {
  std::vector<double> train_loss;  // mean per-pair cross-entropy per epoch
  std::vector<double> dev_map;
  std::size_t best_epoch = 0;
  double best_dev_map = -1.0;
  std::vector<std::vector<double>> best_params;
};

inline void snapshot_params(const ParamStore& params,
                            std::vector<std::vector<double>>& out) {
  out.clear();
  for (const auto& [name, t] : params.all()) out.push_back(t.values());
}

inline void restore_params(ParamStore& params,
                           const std::vector<std::vector<double>>& snap) {
  const auto& all = params.all();
  if (snap.size() != all.size())
    throw ConfigMismatch("parameter snapshot size mismatch");
  for (std::size_t i = 0; i < all.size(); ++i) {
    Tensor t = all[i].second;
    t.mutable_values() = snap[i];
  }
}

inline TrainResult train_model(Model& model,
                               const std::vector<EncodedQuestion>& train,
                               const std::vector<EncodedQuestion>& dev,
                               const TrainOptions& opts) {
  const ModelConfig& cfg = model.config();
  Rng shuffle_rng = Rng(cfg.seed).derive(0x73687566);
  AdamOptimizer adam(cfg.learning_rate);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t q = 0; q < train.size(); ++q)
    for (std::size_t c = 0; c < train[q].candidates.size(); ++c)
      pairs.emplace_back(q, c);

  TrainResult result;
  std::size_t since_best = 0;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    shuffle_rng.shuffle(pairs);
    double ce_sum = 0.0;
    for (std::size_t start = 0; start < pairs.size();
         start += cfg.batch_size) {
      std::size_t end = std::min(pairs.size(), start + cfg.batch_size);
      for (const auto& [name, t] : model.params().all()) {
        Tensor tt = t;
        tt.zero_grad();
      }
      std::vector<Tensor> probs;
      std::vector<int> labels;
      probs.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const auto& [q, c] = pairs[i];
        auto out = model.forward(train[q].question, train[q].candidates[c],
                                 train[q].x_feats[c], true);
        probs.push_back(out.prob);
        labels.push_back(train[q].labels[c]);
      }
      Tensor loss = batch_loss(probs, labels, model.params(), cfg.l2_lambda);
      if (!std::isfinite(loss.value()))
        throw NumericError("non-finite training loss");
      ad::backward(loss);
      for (std::size_t i = 0; i < probs.size(); ++i) {
        double p = std::min(1.0 - 1e-7, std::max(1e-7, probs[i].value()));
        ce_sum += labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
      }
      // The padding row stays pinned at zero.
      {
        Tensor w = model.word_embeddings();
        if (!w.mutable_grad().empty())
          for (std::size_t j = 0; j < w.cols(); ++j)
            w.mutable_grad()[kPadIndex * w.cols() + j] = 0.0;
      }
      adam.step(model.params());
      {
        Tensor w = model.word_embeddings();
        auto& vals = w.mutable_values();
        for (std::size_t j = 0; j < w.cols(); ++j)
          vals[kPadIndex * w.cols() + j] = 0.0;
      }
    }
    double train_loss =
        pairs.empty() ? 0.0 : ce_sum / static_cast<double>(pairs.size());
    double dev_map = dev.empty() ? 0.0 : evaluate_split(model, dev).map;
    result.train_loss.push_back(train_loss);
    result.dev_map.push_back(dev_map);
    if (opts.on_epoch) opts.on_epoch(epoch, train_loss, dev_map);

    if (dev_map > result.best_dev_map) {
      result.best_dev_map = dev_map;
      result.best_epoch = epoch;
      snapshot_params(model.params(), result.best_params);
      since_best = 0;
    } else {
      ++since_best;
      if (opts.early_stopping && since_best >= opts.patience) break;
    }
  }
  if (result.best_params.empty())
    snapshot_params(model.params(), result.best_params);
  return result;
}

}  // namespace ckann
