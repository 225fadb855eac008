#pragma once

// Dataset ingestion and the synthetic planted-signal benchmark generator.
// Records are JSON lines: {"qid": ..., "question": ..., "candidates":
// [{"text": ..., "label": 0|1}, ...]} — see docs/file_formats.md.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "ckann/common.hpp"
#include "ckann/kg.hpp"

namespace ckann {

inline constexpr std::size_t kMaxSentenceLen = 40;

struct Candidate {
  std::vector<std::string> tokens;
  int label = 0;  // -1 when the record carries no label (predict inputs)
};

struct QAInstance {
  std::string qid;
  std::vector<std::string> question_tokens;
  std::vector<Candidate> candidates;
};

// Lowercase, detach leading/trailing ASCII punctuation, split on whitespace.
inline std::vector<std::string> tokenize(const std::string& text,
                                         std::size_t max_len = 0) {
  static const std::string punct = ".,!?;:\"()[]{}<>";
  std::vector<std::string> out;
  for (auto& chunk : split_ws(lowercase(text))) {
    std::vector<std::string> lead, tail;
    std::string core = chunk;
    while (!core.empty() && punct.find(core.front()) != std::string::npos) {
      lead.push_back(std::string(1, core.front()));
      core.erase(core.begin());
    }
    while (!core.empty() && punct.find(core.back()) != std::string::npos) {
      tail.push_back(std::string(1, core.back()));
      core.pop_back();
    }
    for (auto& t : lead) out.push_back(std::move(t));
    if (!core.empty()) out.push_back(core);
    for (auto it = tail.rbegin(); it != tail.rend(); ++it)
      out.push_back(std::move(*it));
  }
  if (max_len > 0 && out.size() > max_len) out.resize(max_len);
  return out;
}

inline std::vector<QAInstance> load_dataset(const std::string& path,
                                            std::size_t max_len = kMaxSentenceLen,
                                            bool require_labels = true) {
  auto lines = read_lines(path);
  std::vector<QAInstance> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const std::exception& e) {
      throw MalformedRecord(i + 1, e.what());
    }
    if (!j.is_object() || !j.contains("qid") || !j.contains("question") ||
        !j.contains("candidates"))
      throw MalformedRecord(i + 1, "need qid, question, candidates");
    QAInstance inst;
    try {
      inst.qid = j["qid"].get<std::string>();
      inst.question_tokens =
          tokenize(j["question"].get<std::string>(), max_len);
      for (const auto& c : j["candidates"]) {
        Candidate cand;
        cand.tokens = tokenize(c["text"].get<std::string>(), max_len);
        if (c.contains("label")) {
          if (!c["label"].is_number_integer())
            throw LabelError(inst.qid + ": label must be an integer");
          int l = c["label"].get<int>();
          if (l != 0 && l != 1)
            throw LabelError(inst.qid + ": label must be 0 or 1, got " +
                             std::to_string(l));
          cand.label = l;
        } else if (require_labels) {
          throw LabelError(inst.qid + ": missing label");
        } else {
          cand.label = -1;
        }
        inst.candidates.push_back(std::move(cand));
      }
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw MalformedRecord(i + 1, e.what());
    }
    if (inst.candidates.empty()) throw EmptyCandidates(inst.qid);
    out.push_back(std::move(inst));
  }
  return out;
}

inline std::string dataset_record(const QAInstance& inst) {
  nlohmann::json j;
  j["qid"] = inst.qid;
  std::string q;
  for (std::size_t i = 0; i < inst.question_tokens.size(); ++i)
    q += (i ? " " : "") + inst.question_tokens[i];
  j["question"] = q;
  j["candidates"] = nlohmann::json::array();
  for (const auto& c : inst.candidates) {
    std::string a;
    for (std::size_t i = 0; i < c.tokens.size(); ++i)
      a += (i ? " " : "") + c.tokens[i];
    nlohmann::json cj;
    cj["text"] = a;
    if (c.label >= 0) cj["label"] = c.label;
    j["candidates"].push_back(cj);
  }
  return j.dump();
}

inline void save_dataset(const std::vector<QAInstance>& insts,
                         const std::string& path) {
  std::string out;
  for (const auto& inst : insts) out += dataset_record(inst) + "\n";
  write_file(path, out);
}

// --- vocabulary & word embeddings --------------------------------------------

inline constexpr std::size_t kPadIndex = 0;  // zero row, never updated
inline constexpr std::size_t kOovIndex = 1;

struct WordTable {
  std::unordered_map<std::string, std::size_t> index;  // token -> row
  std::vector<std::string> tokens;                     // row -> token
  std::size_t dim = 0;
  std::vector<double> matrix;  // row-major |V| x dim

  std::size_t lookup(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? kOovIndex : it->second;
  }
  std::size_t size() const { return tokens.size(); }
};

// Reads "token v1 ... v_d" lines.
inline std::map<std::string, std::vector<double>> load_word_vectors(
    const std::string& path) {
  std::map<std::string, std::vector<double>> vecs;
  for (auto& line : read_lines(path)) {
    if (trim(line).empty()) continue;
    auto parts = split_ws(line);
    if (parts.size() < 2) throw FormatError("bad embedding line: " + line);
    std::vector<double> v;
    v.reserve(parts.size() - 1);
    for (std::size_t i = 1; i < parts.size(); ++i) {
      try {
        v.push_back(std::stod(parts[i]));
      } catch (const std::exception&) {
        throw FormatError("bad embedding value: " + parts[i]);
      }
    }
    vecs[parts[0]] = std::move(v);
  }
  return vecs;
}

// Vocabulary = reserved rows + sorted train-split tokens. Tokens found in
// the vector file take its values; the rest (and the OOV row) are drawn
// uniform from [-0.1, 0.1].
inline WordTable build_word_table(
    const std::vector<QAInstance>& train,
    const std::map<std::string, std::vector<double>>& vectors,
    std::size_t dim, std::uint64_t seed) {
  WordTable t;
  t.dim = dim;
  std::set<std::string> vocab;
  for (const auto& inst : train) {
    vocab.insert(inst.question_tokens.begin(), inst.question_tokens.end());
    for (const auto& c : inst.candidates)
      vocab.insert(c.tokens.begin(), c.tokens.end());
  }
  t.tokens = {"<pad>", "<oov>"};
  for (const auto& tok : vocab) t.tokens.push_back(tok);
  for (std::size_t i = 0; i < t.tokens.size(); ++i) t.index[t.tokens[i]] = i;

  Rng rng = Rng(seed).derive(0x776f7264);
  t.matrix.assign(t.tokens.size() * dim, 0.0);
  for (std::size_t i = kOovIndex; i < t.tokens.size(); ++i) {
    auto it = vectors.find(t.tokens[i]);
    if (it != vectors.end()) {
      if (it->second.size() != dim)
        throw FormatError("embedding dim mismatch for token " + t.tokens[i]);
      std::copy(it->second.begin(), it->second.end(),
                t.matrix.begin() + i * dim);
    } else {
      for (std::size_t j = 0; j < dim; ++j)
        t.matrix[i * dim + j] = rng.uniform(-0.1, 0.1);
    }
  }
  return t;
}

// --- idf / stopwords -----------------------------------------------------------

struct IdfTable {
  std::unordered_map<std::string, double> idf;
  double default_idf = 1.0;  // value for df = 0

  double operator()(const std::string& token) const {
    auto it = idf.find(token);
    return it == idf.end() ? default_idf : it->second;
  }
};

// idf(w) = ln((1 + N) / (1 + df(w))) + 1 over all question and answer
// sentences of the split.
inline IdfTable compute_idf(const std::vector<QAInstance>& split) {
  IdfTable table;
  std::unordered_map<std::string, std::size_t> df;
  std::size_t n_docs = 0;
  auto count_doc = [&](const std::vector<std::string>& tokens) {
    ++n_docs;
    std::set<std::string> distinct(tokens.begin(), tokens.end());
    for (const auto& t : distinct) ++df[t];
  };
  for (const auto& inst : split) {
    count_doc(inst.question_tokens);
    for (const auto& c : inst.candidates) count_doc(c.tokens);
  }
  double n = static_cast<double>(n_docs);
  for (const auto& [tok, d] : df)
    table.idf[tok] = std::log((1.0 + n) / (1.0 + static_cast<double>(d))) + 1.0;
  table.default_idf = std::log(1.0 + n) + 1.0;
  return table;
}

inline std::set<std::string> load_stopwords(const std::string& path) {
  std::set<std::string> out;
  for (auto& line : read_lines(path)) {
    auto t = trim(line);
    if (!t.empty() && t[0] != '#') out.insert(lowercase(t));
  }
  return out;
}

// --- overlap features -----------------------------------------------------------

// [raw overlap ratio, idf-weighted overlap ratio, both with stopwords removed].
inline std::array<double, 4> overlap_features(
    const std::vector<std::string>& q_tokens,
    const std::vector<std::string>& a_tokens, const IdfTable& idf,
    const std::set<std::string>& stopwords) {
  auto compute = [&](bool drop_stop) -> std::array<double, 2> {
    std::set<std::string> q, a;
    for (const auto& t : q_tokens)
      if (!drop_stop || !stopwords.count(t)) q.insert(t);
    for (const auto& t : a_tokens)
      if (!drop_stop || !stopwords.count(t)) a.insert(t);
    double inter = 0.0, inter_idf = 0.0, q_idf = 0.0, a_idf = 0.0;
    for (const auto& t : q) {
      q_idf += idf(t);
      if (a.count(t)) {
        inter += 1.0;
        inter_idf += idf(t);
      }
    }
    for (const auto& t : a) a_idf += idf(t);
    double denom = static_cast<double>(q.size() + a.size());
    double denom_idf = q_idf + a_idf;
    return {denom > 0 ? inter / denom : 0.0,
            denom_idf > 0 ? inter_idf / denom_idf : 0.0};
  };
  auto with_stop = compute(false);
  auto no_stop = compute(true);
  return {with_stop[0], with_stop[1], no_stop[0], no_stop[1]};
}

// --- synthetic benchmark ----------------------------------------------------------

struct SyntheticSpec {
  std::size_t n_entities = 300;
  std::size_t n_relations = 6;
  std::size_t n_questions = 500;
  std::size_t candidates_per_question = 5;
  std::size_t vocab_size = 400;
  std::size_t word_dim = 24;
  double signal_strength = 1.0;
  std::uint64_t seed = 7;
};

struct SyntheticData {
  std::vector<QAInstance> train, dev, test;
  KnowledgeGraph kg;
  std::vector<std::tuple<std::string, std::string, double>> aliases;
  std::map<std::string, std::vector<double>> word_vectors;
};

// Plants the answer signal in the KG: the positive candidate mentions an
// entity one hop from the question's subject entity, negatives mention
// unlinked entities but share more filler words with the question, so
// bag-of-words similarity points the wrong way.
inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_entities < 10 || spec.n_relations < 1 || spec.n_questions < 1 ||
      spec.candidates_per_question < 2 || spec.vocab_size < 20)
    throw SyntheticSpecError("sizes too small");
  if (spec.signal_strength < 0.0 || spec.signal_strength > 1.0)
    throw SyntheticSpecError("signal_strength must be in [0,1]");

  SyntheticData data;
  Rng rng(spec.seed);

  auto ent_surface = [](std::size_t i) { return "ent" + std::to_string(i); };
  auto rel_name = [](std::size_t i) { return "rel" + std::to_string(i); };

  // Sparse random KG: every entity gets a handful of neighbors.
  Rng kg_rng = rng.derive(1);
  for (std::size_t i = 0; i < spec.n_entities; ++i)
    data.kg.intern_entity(ent_surface(i));
  for (std::size_t i = 0; i < spec.n_relations; ++i)
    data.kg.intern_relation(rel_name(i));
  for (std::size_t i = 0; i < spec.n_entities; ++i) {
    std::size_t degree = 2 + kg_rng.uniform_index(3);  // 2..4 outgoing facts
    for (std::size_t d = 0; d < degree; ++d) {
      std::size_t t = kg_rng.uniform_index(spec.n_entities);
      if (t == i) continue;
      auto r = static_cast<RelationId>(kg_rng.uniform_index(spec.n_relations));
      data.kg.add_triple({static_cast<EntityId>(i), r,
                          static_cast<EntityId>(t)});
    }
  }

  for (std::size_t i = 0; i < spec.n_entities; ++i)
    data.aliases.emplace_back(ent_surface(i), ent_surface(i), 1.0);

  // Filler vocabulary, disjoint from entity surfaces.
  std::vector<std::string> fillers;
  for (std::size_t i = 0; i < spec.vocab_size; ++i)
    fillers.push_back("w" + std::to_string(i));

  Rng emb_rng = rng.derive(2);
  for (const auto& w : fillers) {
    std::vector<double> v(spec.word_dim);
    for (auto& x : v) x = emb_rng.uniform(-0.1, 0.1);
    data.word_vectors[w] = v;
  }
  for (std::size_t i = 0; i < spec.n_entities; ++i) {
    std::vector<double> v(spec.word_dim);
    for (auto& x : v) x = emb_rng.uniform(-0.1, 0.1);
    data.word_vectors[ent_surface(i)] = v;
  }

  Rng q_rng = rng.derive(3);
  auto pick_fillers = [&](std::size_t n, Rng& r) {
    std::vector<std::string> out;
    std::set<std::size_t> used;
    while (out.size() < n) {
      std::size_t i = r.uniform_index(fillers.size());
      if (used.insert(i).second) out.push_back(fillers[i]);
    }
    return out;
  };

  std::vector<QAInstance> all;
  std::size_t n_signal = static_cast<std::size_t>(
      spec.signal_strength * static_cast<double>(spec.n_questions) + 1e-9);
  for (std::size_t qi = 0; qi < spec.n_questions; ++qi) {
    bool planted = qi < n_signal;

    // Subject must have neighbors for a planted question.
    EntityId subject = 0;
    for (int tries = 0; tries < 1000; ++tries) {
      subject = static_cast<EntityId>(q_rng.uniform_index(spec.n_entities));
      if (!data.kg.neighbors(subject).empty()) break;
    }
    if (data.kg.neighbors(subject).empty()) {
      for (std::size_t e = 0; e < spec.n_entities; ++e)
        if (!data.kg.neighbors(static_cast<EntityId>(e)).empty()) {
          subject = static_cast<EntityId>(e);
          break;
        }
    }
    const auto& nbrs = data.kg.neighbors(subject);
    std::vector<EntityId> nbr_list(nbrs.begin(), nbrs.end());

    auto non_neighbor = [&]() {
      while (true) {
        auto e = static_cast<EntityId>(q_rng.uniform_index(spec.n_entities));
        if (e != subject && !nbrs.count(e)) return e;
      }
    };

    QAInstance inst;
    inst.qid = "q" + std::to_string(qi);
    auto q_fill = pick_fillers(5, q_rng);
    inst.question_tokens = {"which", q_fill[0], q_fill[1],
                            ent_surface(subject), q_fill[2], q_fill[3],
                            q_fill[4]};

    std::size_t n_cands = spec.candidates_per_question;
    std::size_t pos_slot = q_rng.uniform_index(n_cands);
    for (std::size_t ci = 0; ci < n_cands; ++ci) {
      Candidate cand;
      bool is_pos = ci == pos_slot;
      cand.label = is_pos ? 1 : 0;

      // Every candidate mentions three entities: all one hop from the subject
      // for a planted positive, all unlinked otherwise.
      constexpr std::size_t kMentionsPerCandidate = 3;
      std::vector<EntityId> mentions;
      while (mentions.size() < kMentionsPerCandidate) {
        EntityId m;
        if (planted && is_pos) {
          m = nbr_list[q_rng.uniform_index(nbr_list.size())];
          for (int tries = 0;
               tries < 20 && std::find(mentions.begin(), mentions.end(), m) !=
                                 mentions.end();
               ++tries)
            m = nbr_list[q_rng.uniform_index(nbr_list.size())];
        } else {
          m = non_neighbor();
          while (std::find(mentions.begin(), mentions.end(), m) !=
                 mentions.end())
            m = non_neighbor();
        }
        mentions.push_back(m);
      }

      // Positives share 1-2 fillers with the question, negatives 1-3, so
      // surface overlap leans toward negatives without separating cleanly.
      std::size_t n_shared =
          is_pos ? 1 + q_rng.uniform_index(2) : 1 + q_rng.uniform_index(3);
      std::vector<std::string> toks;
      for (EntityId m : mentions) toks.push_back(ent_surface(m));
      for (std::size_t s = 0; s < n_shared; ++s)
        toks.push_back(q_fill[q_rng.uniform_index(q_fill.size())]);
      auto own = pick_fillers(3, q_rng);
      toks.insert(toks.end(), own.begin(), own.end());
      q_rng.shuffle(toks);
      cand.tokens = std::move(toks);
      inst.candidates.push_back(std::move(cand));
    }
    all.push_back(std::move(inst));
  }

  // 70 / 15 / 15 split in generation order (questions are already i.i.d.).
  std::size_t n_train = static_cast<std::size_t>(0.7 * all.size() + 1e-9);
  std::size_t n_dev = static_cast<std::size_t>(0.15 * all.size() + 1e-9);
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i < n_train)
      data.train.push_back(all[i]);
    else if (i < n_train + n_dev)
      data.dev.push_back(all[i]);
    else
      data.test.push_back(all[i]);
  }
  return data;
}

inline void save_synthetic(const SyntheticData& data, const std::string& dir) {
  save_dataset(data.train, dir + "/train.jsonl");
  save_dataset(data.dev, dir + "/dev.jsonl");
  save_dataset(data.test, dir + "/test.jsonl");
  save_triples(data.kg, dir + "/kg_triples.tsv");
  std::string aliases;
  for (const auto& [surface, entity, prior] : data.aliases)
    aliases += surface + "\t" + entity + "\t" + fmt_double(prior) + "\n";
  write_file(dir + "/kg_aliases.tsv", aliases);
  std::string emb;
  for (const auto& [tok, vec] : data.word_vectors) {
    emb += tok;
    for (double v : vec) emb += " " + fmt_double(v);
    emb += "\n";
  }
  write_file(dir + "/word_embeddings.txt", emb);
}

}  // namespace ckann
