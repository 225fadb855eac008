#pragma once

// Answer-selection model family: a shared Bi-LSTM context encoder, a
// knowledge channel (context-guided candidate attention + CNN, or entity
// graphs + GCN + CNN), one of four attention readouts, and a joint scoring
// layer over [s_q, sim, s_a, overlap features].

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ckann/autodiff.hpp"
#include "ckann/common.hpp"
#include "ckann/data.hpp"
#include "ckann/entity_graph.hpp"
#include "ckann/kg.hpp"
#include "ckann/linking.hpp"
#include "ckann/transe.hpp"

namespace ckann {

using ad::Tensor;

enum class Variant { KNN, KANN_SELF, KANN_CO, KANN_MULTI, CKANN };
enum class SimKind { Bilinear, Cosine, Dot, None };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::KNN: return "KNN";
    case Variant::KANN_SELF: return "KANN_SELF";
    case Variant::KANN_CO: return "KANN_CO";
    case Variant::KANN_MULTI: return "KANN_MULTI";
    case Variant::CKANN: return "CKANN";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "KNN") return Variant::KNN;
  if (s == "KANN_SELF") return Variant::KANN_SELF;
  if (s == "KANN_CO") return Variant::KANN_CO;
  if (s == "KANN_MULTI") return Variant::KANN_MULTI;
  if (s == "CKANN") return Variant::CKANN;
  throw ConfigError("unknown variant: " + s);
}

inline std::string sim_kind_name(SimKind s) {
  switch (s) {
    case SimKind::Bilinear: return "bilinear";
    case SimKind::Cosine: return "cosine";
    case SimKind::Dot: return "dot";
    case SimKind::None: return "none";
  }
  return "?";
}

inline SimKind parse_sim_kind(const std::string& s) {
  if (s == "bilinear") return SimKind::Bilinear;
  if (s == "cosine") return SimKind::Cosine;
  if (s == "dot") return SimKind::Dot;
  if (s == "none") return SimKind::None;
  throw ConfigError("unknown sim kind: " + s);
}

struct ModelConfig {
  Variant variant = Variant::CKANN;
  std::size_t d_h = 200;             // Bi-LSTM output width
  std::size_t hidden_per_dir = 100;  // d_h / 2
  std::size_t d_k = 64;              // entity embedding width
  std::size_t d_w = 300;             // word embedding width
  std::vector<std::size_t> filter_widths = {2, 3};
  std::size_t n_feature_maps = 200;     // token-aligned knowledge CNN total
  std::size_t lstm_hidden_final = 200;  // joint hidden layer width
  double learning_rate = 0.0005;
  double dropout = 0.5;
  std::size_t batch_size = 64;
  double l2_lambda = 0.0001;
  std::size_t max_len = 40;
  std::size_t K = 5;
  SimKind sim_kind = SimKind::Bilinear;
  bool use_overlap_features = true;
  bool ablate_knowledge = false;  // zero knowledge channel, keep the rest
  std::size_t max_ngram = 4;
  double link_threshold = 0.2;
  std::size_t max_neighbors_per_node = 16;
  std::uint64_t seed = 0;

  void validate() const {
    if (d_h != 2 * hidden_per_dir)
      throw ConfigError("d_h must equal 2 * hidden_per_dir");
    if (filter_widths.empty()) throw ConfigError("need at least one filter width");
    if (n_feature_maps % filter_widths.size() != 0)
      throw ConfigError("n_feature_maps must divide evenly across widths");
    if (d_h % filter_widths.size() != 0)
      throw ConfigError("d_h must divide evenly across widths");
    if (K < 1) throw ConfigError("K must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0)
      throw ConfigError("dropout must be in [0, 1)");
  }

  // Knowledge feature width entering the attention layer.
  std::size_t d_f() const {
    return variant == Variant::CKANN ? d_h : n_feature_maps;
  }
  std::size_t sentence_dim() const { return d_h + d_f(); }

  std::string canonical_string() const {
    std::string s = "variant=" + variant_name(variant);
    auto kv = [&s](const char* k, const std::string& v) {
      s += ";" + std::string(k) + "=" + v;
    };
    kv("d_h", std::to_string(d_h));
    kv("hidden_per_dir", std::to_string(hidden_per_dir));
    kv("d_k", std::to_string(d_k));
    kv("d_w", std::to_string(d_w));
    std::string fw;
    for (auto w : filter_widths) fw += (fw.empty() ? "" : ",") + std::to_string(w);
    kv("filter_widths", fw);
    kv("n_feature_maps", std::to_string(n_feature_maps));
    kv("lstm_hidden_final", std::to_string(lstm_hidden_final));
    kv("learning_rate", fmt_double(learning_rate));
    kv("dropout", fmt_double(dropout));
    kv("batch_size", std::to_string(batch_size));
    kv("l2_lambda", fmt_double(l2_lambda));
    kv("max_len", std::to_string(max_len));
    kv("K", std::to_string(K));
    kv("sim_kind", sim_kind_name(sim_kind));
    kv("use_overlap_features", use_overlap_features ? "1" : "0");
    kv("ablate_knowledge", ablate_knowledge ? "1" : "0");
    kv("max_ngram", std::to_string(max_ngram));
    kv("link_threshold", fmt_double(link_threshold));
    kv("max_neighbors_per_node", std::to_string(max_neighbors_per_node));
    kv("seed", std::to_string(seed));
    return s;
  }
  std::uint64_t hash() const { return fnv1a64(canonical_string()); }
};

// Named normalized attention rows recorded during a forward pass.
struct AttentionTrace {
  std::map<std::string, std::vector<std::vector<double>>> rows;

  void add(const std::string& name, const Tensor& vec) {
    rows[name].push_back(vec.values());
  }
  void add_matrix_rows(const std::string& name, const Tensor& m) {
    auto& dst = rows[name];
    for (std::size_t i = 0; i < m.rows(); ++i) {
      std::vector<double> r(m.cols());
      for (std::size_t j = 0; j < m.cols(); ++j) r[j] = m.at(i, j);
      dst.push_back(std::move(r));
    }
  }
};

// Preprocessed sentence: token ids, linked knowledge, and (for the graph
// variant) cached propagation inputs op_p * E over the node features.
struct EncodedSentence {
  std::vector<std::string> tokens;
  std::vector<std::size_t> token_ids;
  KnowledgeSequence kseq;
  bool has_graph = false;
  std::vector<std::string> mention_names;  // one per mention-level entity
  std::array<Tensor, 3> op_feat;           // const (n x d_k), one per p
  std::vector<std::size_t> mention_rows;   // graph node row per mention
  std::vector<EntityGraph> graphs_for_cache;
};

// --- parameters ---------------------------------------------------------------

class ParamStore {
 public:
  Tensor create(const std::string& name, ad::Shape shape, Rng& rng,
                double lo = -0.1, double hi = 0.1) {
    std::vector<double> v(ad::shape_size(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return insert(name, Tensor::from(std::move(shape), std::move(v), true));
  }

  Tensor create_zeros(const std::string& name, ad::Shape shape) {
    return insert(name, Tensor::zeros(std::move(shape), true));
  }

  Tensor adopt(const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    return insert(name, std::move(t));
  }

  const Tensor& get(const std::string& name) const {
    for (const auto& [n, t] : params_)
      if (n == name) return t;
    throw ConfigError("no parameter named " + name);
  }
  bool has(const std::string& name) const {
    for (const auto& [n, t] : params_)
      if (n == name) return true;
    return false;
  }

  const std::vector<std::pair<std::string, Tensor>>& all() const {
    return params_;
  }

 private:
  Tensor insert(const std::string& name, Tensor t) {
    if (has(name)) throw ConfigError("duplicate parameter name " + name);
    params_.emplace_back(name, t);
    return t;
  }
  std::vector<std::pair<std::string, Tensor>> params_;
};

// --- reusable forward pieces ----------------------------------------------------

// Candidate-entity attention guided by the token's context vector:
// m_i = tanh(e_i W_em + h_t W_hm), alpha = softmax(m w_m),
// k~_t = sum_i alpha_i e_i; positions without candidates give zero rows.
inline Tensor context_guided_knowledge(
    const Tensor& h_w, const KnowledgeSequence& kseq, const Tensor& entity_table,
    std::size_t oov_row, const Tensor& w_em, const Tensor& w_hm,
    const Tensor& w_m, AttentionTrace* trace, const std::string& trace_name) {
  std::size_t L = h_w.rows();
  std::size_t d_k = entity_table.cols();
  std::vector<Tensor> out_rows;
  out_rows.reserve(L);
  for (std::size_t t = 0; t < L; ++t) {
    std::optional<std::size_t> set_idx =
        t < kseq.token_aligned.size() ? kseq.token_aligned[t] : std::nullopt;
    if (!set_idx) {
      out_rows.push_back(Tensor::zeros({d_k}));
      continue;
    }
    const auto& cands = kseq.candidate_sets[*set_idx].candidates;
    std::vector<std::size_t> rows_idx;
    rows_idx.reserve(cands.size());
    for (const auto& c : cands)
      rows_idx.push_back(c.entity && *c.entity < entity_table.rows()
                             ? *c.entity
                             : oov_row);
    Tensor e_t = ad::rows(entity_table, rows_idx);           // K x d_k
    Tensor h_proj = ad::vecmat(ad::row(h_w, t), w_hm);       // d_a
    Tensor m = ad::tanh_t(ad::add_rowvec(ad::matmul(e_t, w_em), h_proj));
    Tensor alpha = ad::softmax_vec(ad::matvec(m, w_m));      // K
    if (trace) trace->add(trace_name, alpha);
    out_rows.push_back(ad::matvec_t(e_t, alpha));            // d_k
  }
  return ad::stack_rows(out_rows);
}

struct ConvParams {
  std::size_t width;
  Tensor kernel;  // (width * d_in) x maps
  Tensor bias;    // maps
};

// Multi-width same-length CNN; feature maps concatenated along features.
inline Tensor knowledge_cnn(const Tensor& seq,
                            const std::vector<ConvParams>& convs) {
  Tensor out;
  for (const auto& c : convs) {
    Tensor h = ad::conv1d(seq, c.kernel, c.bias, c.width);
    out = out.defined() ? ad::concat(out, h, 1) : h;
  }
  return out;
}

// One GCN layer per graph variant with a shared weight matrix; outputs are
// averaged and restricted to the mention rows (original nodes).
inline Tensor gcn_knowledge(const std::vector<GraphOperator>& ops,
                            const Tensor& node_features, const Tensor& w,
                            const std::vector<std::size_t>& mention_rows) {
  if (ops.empty()) throw NodeSetMismatch("no graph operators");
  std::size_t n = node_features.rows();
  for (const auto& op : ops)
    if (op.n != n)
      throw NodeSetMismatch("operator size " + std::to_string(op.n) +
                            " vs " + std::to_string(n) + " nodes");
  Tensor acc;
  for (const auto& op : ops) {
    Tensor op_t = Tensor::from({op.n, op.n}, op.matrix);
    Tensor h = ad::relu_t(ad::matmul(ad::matmul(op_t, node_features), w));
    acc = acc.defined() ? ad::add(acc, h) : h;
  }
  Tensor mean = ad::scale(acc, 1.0 / static_cast<double>(ops.size()));
  return ad::rows(mean, mention_rows);
}

// Same computation over precomputed op_p * E constants (training fast path).
inline Tensor gcn_knowledge_cached(const std::array<Tensor, 3>& op_feat,
                                   const Tensor& w,
                                   const std::vector<std::size_t>& mention_rows) {
  Tensor acc;
  for (const auto& of : op_feat) {
    Tensor h = ad::relu_t(ad::matmul(of, w));
    acc = acc.defined() ? ad::add(acc, h) : h;
  }
  return ad::rows(ad::scale(acc, 1.0 / 3.0), mention_rows);
}

struct AttnPair {
  Tensor s_q;
  Tensor s_a;
};

// Knowledge-aware self-attention: pooled knowledge guides per-position
// weights, then a two-way bilinear affinity pools each sentence.
inline AttnPair self_attention(const Tensor& q_w, const Tensor& q_k,
                               const Tensor& a_w, const Tensor& a_k,
                               const Tensor& w1, const Tensor& w2,
                               const Tensor& w, const Tensor& u_qa,
                               AttentionTrace* trace) {
  auto knowledge_weights = [&](const Tensor& h_w, const Tensor& h_k) {
    Tensor o_k = ad::mean_reduce(h_k, 0);
    Tensor proj = ad::add_rowvec(ad::matmul(h_w, w2), ad::vecmat(o_k, w1));
    return ad::softmax_vec(ad::matvec(ad::tanh_t(proj), w));
  };
  Tensor alpha_qk = knowledge_weights(q_w, q_k);
  Tensor alpha_ak = knowledge_weights(a_w, a_k);
  Tensor o_q = ad::scale_rows(ad::concat(q_w, q_k, 1), alpha_qk);
  Tensor o_a = ad::scale_rows(ad::concat(a_w, a_k, 1), alpha_ak);
  Tensor m = ad::tanh_t(ad::matmul_nt(ad::matmul(o_q, u_qa), o_a));
  Tensor alpha_qo = ad::softmax_vec(ad::max_reduce(m, 1));
  Tensor alpha_ao = ad::softmax_vec(ad::max_reduce(m, 0));
  if (trace) {
    trace->add("q.knowledge_attention", alpha_qk);
    trace->add("a.knowledge_attention", alpha_ak);
    trace->add("q.pair_attention", alpha_qo);
    trace->add("a.pair_attention", alpha_ao);
  }
  return {ad::matvec_t(o_q, alpha_qo), ad::matvec_t(o_a, alpha_ao)};
}

// Knowledge-aware co-attention: context and knowledge affinity matrices,
// max-pooled per side, averaged into one weight vector per sentence.
inline AttnPair co_attention(const Tensor& q_w, const Tensor& q_k,
                             const Tensor& a_w, const Tensor& a_k,
                             const Tensor& u_w, const Tensor& u_k,
                             AttentionTrace* trace) {
  Tensor m_w = ad::tanh_t(ad::matmul_nt(ad::matmul(q_w, u_w), a_w));
  Tensor m_k = ad::tanh_t(ad::matmul_nt(ad::matmul(q_k, u_k), a_k));
  Tensor alpha_q =
      ad::scale(ad::add(ad::softmax_vec(ad::max_reduce(m_w, 1)),
                        ad::softmax_vec(ad::max_reduce(m_k, 1))),
                0.5);
  Tensor alpha_a =
      ad::scale(ad::add(ad::softmax_vec(ad::max_reduce(m_w, 0)),
                        ad::softmax_vec(ad::max_reduce(m_k, 0))),
                0.5);
  if (trace) {
    trace->add("q.co_attention", alpha_q);
    trace->add("a.co_attention", alpha_a);
  }
  return {ad::matvec_t(ad::concat(q_w, q_k, 1), alpha_q),
          ad::matvec_t(ad::concat(a_w, a_k, 1), alpha_a)};
}

struct MultiViewParams {
  Tensor u_w;   // d_h x d_h
  Tensor u_k;   // d_f x d_f
  Tensor w_w;   // (d_h + d_f) x d_h
  Tensor u_sw;  // d_h
  Tensor w_k;   // (d_f + d_h) x d_h
  Tensor u_sk;  // d_h
};

// Word-view and knowledge-view co-attention plus semantic-view self-attention,
// fused as gamma = softmax(alpha + beta) per sequence.
inline AttnPair multi_view_attention(const Tensor& q_w, const Tensor& a_w,
                                     const Tensor& q_k, const Tensor& a_k,
                                     const MultiViewParams& p,
                                     AttentionTrace* trace) {
  Tensor m_w = ad::matmul_nt(ad::matmul(q_w, p.u_w), a_w);
  Tensor m_k = ad::matmul_nt(ad::matmul(q_k, p.u_k), a_k);
  Tensor alpha_wq = ad::softmax_vec(ad::max_reduce(m_w, 1));
  Tensor alpha_wa = ad::softmax_vec(ad::max_reduce(m_w, 0));
  Tensor alpha_kq = ad::softmax_vec(ad::max_reduce(m_k, 1));
  Tensor alpha_ka = ad::softmax_vec(ad::max_reduce(m_k, 0));

  auto semantic = [](const Tensor& h, const Tensor& other_pooled,
                     const Tensor& w, const Tensor& u) {
    Tensor tiled = ad::tile_rowvec(other_pooled, h.rows());
    Tensor joint = ad::concat(h, tiled, 1);
    return ad::matvec(ad::tanh_t(ad::matmul(joint, w)), u);
  };
  Tensor qk_pooled = ad::mean_reduce(q_k, 0);
  Tensor ak_pooled = ad::mean_reduce(a_k, 0);
  Tensor qw_pooled = ad::mean_reduce(q_w, 0);
  Tensor aw_pooled = ad::mean_reduce(a_w, 0);
  Tensor beta_wq = semantic(q_w, qk_pooled, p.w_w, p.u_sw);
  Tensor beta_wa = semantic(a_w, ak_pooled, p.w_w, p.u_sw);
  Tensor beta_kq = semantic(q_k, qw_pooled, p.w_k, p.u_sk);
  Tensor beta_ka = semantic(a_k, aw_pooled, p.w_k, p.u_sk);

  Tensor gamma_wq = ad::softmax_vec(ad::add(alpha_wq, beta_wq));
  Tensor gamma_wa = ad::softmax_vec(ad::add(alpha_wa, beta_wa));
  Tensor gamma_kq = ad::softmax_vec(ad::add(alpha_kq, beta_kq));
  Tensor gamma_ka = ad::softmax_vec(ad::add(alpha_ka, beta_ka));
  if (trace) {
    trace->add("q.word_view", gamma_wq);
    trace->add("a.word_view", gamma_wa);
    trace->add("q.knowledge_view", gamma_kq);
    trace->add("a.knowledge_view", gamma_ka);
  }
  Tensor s_q = ad::concat(ad::matvec_t(q_w, gamma_wq),
                          ad::matvec_t(q_k, gamma_kq), 0);
  Tensor s_a = ad::concat(ad::matvec_t(a_w, gamma_wa),
                          ad::matvec_t(a_k, gamma_ka), 0);
  return {s_q, s_a};
}

inline Tensor similarity_score(const Tensor& s_q, const Tensor& s_a,
                               SimKind kind, const Tensor* w_sim) {
  switch (kind) {
    case SimKind::Bilinear:
      return ad::dot(s_q, ad::matvec(*w_sim, s_a));
    case SimKind::Dot:
      return ad::dot(s_q, s_a);
    case SimKind::Cosine: {
      Tensor nq = ad::sqrt_t(ad::add_const(ad::dot(s_q, s_q), 1e-12));
      Tensor na = ad::sqrt_t(ad::add_const(ad::dot(s_a, s_a), 1e-12));
      return ad::divide(ad::dot(s_q, s_a), ad::mul(nq, na));
    }
    case SimKind::None:
      return Tensor();
  }
  return Tensor();
}

// --- the model -------------------------------------------------------------------

struct ForwardOutput {
  Tensor prob;  // scalar in (0,1)
  AttentionTrace trace;
};

class Model {
 public:
  Model(ModelConfig cfg, const WordTable& words, const EmbeddingTable& entities)
      : cfg_(std::move(cfg)), dropout_rng_(Rng(cfg_.seed).derive(0x64726f70)) {
    cfg_.validate();
    if (words.dim != cfg_.d_w)
      throw ConfigMismatch("word table dim " + std::to_string(words.dim) +
                           " vs config d_w " + std::to_string(cfg_.d_w));
    if (entities.dim != cfg_.d_k)
      throw ConfigMismatch("entity table dim " + std::to_string(entities.dim) +
                           " vs config d_k " + std::to_string(cfg_.d_k));
    Rng rng = Rng(cfg_.seed).derive(0x696e6974);

    word_emb_ = store_.adopt(
        "word_emb", Tensor::from({words.size(), words.dim}, words.matrix));

    // Frozen entity rows with one trailing zero row for ids outside the table.
    std::vector<double> ev = entities.entity_vectors;
    ev.resize((entities.n_entities + 1) * entities.dim, 0.0);
    entity_emb_ = Tensor::from({entities.n_entities + 1, entities.dim}, ev);
    entity_oov_row_ = entities.n_entities;

    auto lstm = [&](const std::string& prefix) {
      ad::LstmWeights w;
      w.w_x = store_.create(prefix + ".w_x", {cfg_.d_w, 4 * cfg_.hidden_per_dir}, rng);
      w.w_h = store_.create(prefix + ".w_h",
                            {cfg_.hidden_per_dir, 4 * cfg_.hidden_per_dir}, rng);
      w.b = store_.create(prefix + ".b", {4 * cfg_.hidden_per_dir}, rng);
      // forget gate bias starts at zero
      auto& b = w.b.mutable_values();
      for (std::size_t j = cfg_.hidden_per_dir; j < 2 * cfg_.hidden_per_dir; ++j)
        b[j] = 0.0;
      return w;
    };
    lstm_fwd_ = lstm("lstm_fwd");
    lstm_bwd_ = lstm("lstm_bwd");

    const std::size_t d_h = cfg_.d_h, d_k = cfg_.d_k, d_f = cfg_.d_f();
    const std::size_t n_widths = cfg_.filter_widths.size();

    // Knowledge CNN exists for every variant; the total map count is d_f.
    {
      std::size_t maps = d_f / n_widths;
      for (auto width : cfg_.filter_widths) {
        ConvParams c;
        c.width = width;
        c.kernel = store_.create("kcnn.w" + std::to_string(width),
                                 {width * d_k, maps}, rng);
        c.bias = store_.create("kcnn.b" + std::to_string(width), {maps}, rng);
        convs_.push_back(c);
      }
    }

    if (token_aligned_knowledge()) {
      w_em_ = store_.create("ctxk.w_em", {d_k, d_h}, rng);
      w_hm_ = store_.create("ctxk.w_hm", {d_h, d_h}, rng);
      w_m_ = store_.create("ctxk.w_m", {d_h}, rng);
    } else {
      gcn_w_ = store_.create("gcn.w", {d_k, d_k}, rng);
    }

    const std::size_t d_s = cfg_.sentence_dim();
    switch (cfg_.variant) {
      case Variant::KNN:
        break;
      case Variant::KANN_SELF:
        self_w1_ = store_.create("self.w1", {d_f, d_h}, rng);
        self_w2_ = store_.create("self.w2", {d_h, d_h}, rng);
        self_w_ = store_.create("self.w", {d_h}, rng);
        self_uqa_ = store_.create("self.u_qa", {d_s, d_s}, rng);
        break;
      case Variant::KANN_CO:
        co_uw_ = store_.create("co.u_w", {d_h, d_h}, rng);
        co_uk_ = store_.create("co.u_k", {d_f, d_f}, rng);
        break;
      case Variant::KANN_MULTI:
      case Variant::CKANN:
        mv_.u_w = store_.create("mv.u_w", {d_h, d_h}, rng);
        mv_.u_k = store_.create("mv.u_k", {d_f, d_f}, rng);
        mv_.w_w = store_.create("mv.w_w", {d_h + d_f, d_h}, rng);
        mv_.u_sw = store_.create("mv.u_sw", {d_h}, rng);
        mv_.w_k = store_.create("mv.w_k", {d_f + d_h, d_h}, rng);
        mv_.u_sk = store_.create("mv.u_sk", {d_h}, rng);
        break;
    }

    if (cfg_.sim_kind == SimKind::Bilinear)
      joint_wsim_ = store_.create("joint.w_sim", {d_s, d_s}, rng);
    std::size_t joint_in = 2 * d_s + (cfg_.sim_kind != SimKind::None ? 1 : 0) +
                           (cfg_.use_overlap_features ? 4 : 0);
    joint_wh_ = store_.create("joint.w_hidden", {joint_in, cfg_.lstm_hidden_final}, rng);
    joint_bh_ = store_.create("joint.b_hidden", {cfg_.lstm_hidden_final}, rng);
    joint_wo_ = store_.create("joint.w_out", {cfg_.lstm_hidden_final, 2}, rng);
    joint_bo_ = store_.create("joint.b_out", {2}, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  Tensor word_embeddings() const { return word_emb_; }
  const Tensor& entity_embeddings() const { return entity_emb_; }
  std::size_t entity_oov_row() const { return entity_oov_row_; }
  Rng& dropout_rng() { return dropout_rng_; }
  void reseed_dropout(std::uint64_t seed) {
    dropout_rng_ = Rng(seed).derive(0x64726f70);
  }

  bool token_aligned_knowledge() const {
    return cfg_.variant != Variant::CKANN;
  }

  Tensor encode_context(const EncodedSentence& s, bool training) {
    if (s.token_ids.empty()) throw EmptySentence();
    Tensor emb = ad::rows(word_emb_, s.token_ids);
    emb = ad::dropout(emb, cfg_.dropout, training, dropout_rng_);
    return ad::bilstm(emb, lstm_fwd_, lstm_bwd_, cfg_.hidden_per_dir);
  }

  // Token-aligned knowledge channel (L x d_f).
  Tensor knowledge_token_aligned(const EncodedSentence& s, const Tensor& h_w,
                                 AttentionTrace* trace,
                                 const std::string& prefix) {
    if (cfg_.ablate_knowledge)
      return Tensor::zeros({h_w.rows(), cfg_.d_f()});
    Tensor ktilde = context_guided_knowledge(
        h_w, s.kseq, entity_emb_, entity_oov_row_, w_em_, w_hm_, w_m_, trace,
        prefix + ".candidate_attention");
    return knowledge_cnn(ktilde, convs_);
  }

  // Mention-level knowledge channel (L_k x d_h); sentences without any
  // usable mention contribute a single zero row.
  Tensor knowledge_mention_level(const EncodedSentence& s) {
    if (cfg_.ablate_knowledge || !s.has_graph)
      return Tensor::zeros({1, cfg_.d_h});
    Tensor e_k = gcn_knowledge_cached(s.op_feat, gcn_w_, s.mention_rows);
    return knowledge_cnn(e_k, convs_);
  }

  ForwardOutput forward(const EncodedSentence& q, const EncodedSentence& a,
                        const std::array<double, 4>& x_feat, bool training) {
    ForwardOutput out;
    AttentionTrace* trace = &out.trace;
    Tensor q_w = encode_context(q, training);
    Tensor a_w = encode_context(a, training);

    Tensor q_k, a_k;
    if (token_aligned_knowledge()) {
      q_k = knowledge_token_aligned(q, q_w, trace, "q");
      a_k = knowledge_token_aligned(a, a_w, trace, "a");
    } else {
      q_k = knowledge_mention_level(q);
      a_k = knowledge_mention_level(a);
    }

    AttnPair s;
    switch (cfg_.variant) {
      case Variant::KNN:
        s = {ad::concat(ad::max_reduce(q_w, 0), ad::max_reduce(q_k, 0), 0),
             ad::concat(ad::max_reduce(a_w, 0), ad::max_reduce(a_k, 0), 0)};
        break;
      case Variant::KANN_SELF:
        s = self_attention(q_w, q_k, a_w, a_k, self_w1_, self_w2_, self_w_,
                           self_uqa_, trace);
        break;
      case Variant::KANN_CO:
        s = co_attention(q_w, q_k, a_w, a_k, co_uw_, co_uk_, trace);
        break;
      case Variant::KANN_MULTI:
      case Variant::CKANN:
        s = multi_view_attention(q_w, a_w, q_k, a_k, mv_, trace);
        break;
    }

    Tensor joint_in = s.s_q;
    if (cfg_.sim_kind != SimKind::None) {
      Tensor sim = similarity_score(
          s.s_q, s.s_a, cfg_.sim_kind,
          cfg_.sim_kind == SimKind::Bilinear ? &joint_wsim_ : nullptr);
      joint_in = ad::concat(joint_in, sim, 0);
    }
    joint_in = ad::concat(joint_in, s.s_a, 0);
    if (cfg_.use_overlap_features) {
      Tensor xf = Tensor::from({4}, {x_feat[0], x_feat[1], x_feat[2], x_feat[3]});
      joint_in = ad::concat(joint_in, xf, 0);
    }
    joint_in = ad::dropout(joint_in, cfg_.dropout, training, dropout_rng_);
    Tensor hidden = ad::tanh_t(ad::add(ad::vecmat(joint_in, joint_wh_), joint_bh_));
    Tensor logits = ad::add(ad::vecmat(hidden, joint_wo_), joint_bo_);
    Tensor probs = ad::softmax_vec(logits);
    out.prob = ad::pick(probs, 1);
    return out;
  }

  double score(const EncodedSentence& q, const EncodedSentence& a,
               const std::array<double, 4>& x_feat) {
    return forward(q, a, x_feat, false).prob.value();
  }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  Tensor word_emb_;
  Tensor entity_emb_;
  std::size_t entity_oov_row_ = 0;
  ad::LstmWeights lstm_fwd_, lstm_bwd_;
  std::vector<ConvParams> convs_;
  Tensor w_em_, w_hm_, w_m_;
  Tensor gcn_w_;
  Tensor self_w1_, self_w2_, self_w_, self_uqa_;
  Tensor co_uw_, co_uk_;
  MultiViewParams mv_;
  Tensor joint_wsim_, joint_wh_, joint_bh_, joint_wo_, joint_bo_;
  Rng dropout_rng_;
};

// --- loss ---------------------------------------------------------------------

inline Tensor binary_cross_entropy(const Tensor& prob, int label) {
  Tensor p = ad::clamp_t(prob, 1e-7, 1.0 - 1e-7);
  Tensor term = label == 1 ? ad::log_t(p)
                           : ad::log_t(ad::sub(Tensor::scalar(1.0), p));
  return ad::scale(term, -1.0);
}

// Cross-entropy summed over the batch plus lambda * ||theta||^2 over every
// trainable weight except the embedding tables.
inline Tensor batch_loss(const std::vector<Tensor>& probs,
                         const std::vector<int>& labels, const ParamStore& params,
                         double l2_lambda) {
  if (probs.size() != labels.size())
    throw DimensionMismatch("batch_loss: probs vs labels");
  Tensor loss = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < probs.size(); ++i)
    loss = ad::add(loss, binary_cross_entropy(probs[i], labels[i]));
  if (l2_lambda > 0.0) {
    Tensor reg;
    for (const auto& [name, t] : params.all()) {
      if (name == "word_emb") continue;
      Tensor sq = ad::sum_all(ad::mul(t, t));
      reg = reg.defined() ? ad::add(reg, sq) : sq;
    }
    if (reg.defined()) loss = ad::add(loss, ad::scale(reg, l2_lambda));
  }
  return loss;
}

}  // namespace ckann
