#pragma once

// Ranking metrics (MAP, MRR, P@1, top-1 accuracy) and the evaluation driver.
// Candidates are ranked by descending score with ties broken by ascending
// original index, so repeated runs on frozen scores are identical.

#include <algorithm>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "ckann/common.hpp"

namespace ckann {

struct RankedList {
  std::string qid;
  std::vector<std::size_t> order;  // candidate indices, best first
  std::vector<int> labels;         // indexed by original candidate index
  std::vector<double> scores;      // indexed by original candidate index
};

inline RankedList rank_candidates(const std::string& qid,
                                  const std::vector<double>& scores,
                                  const std::vector<int>& labels) {
  RankedList r;
  r.qid = qid;
  r.labels = labels;
  r.scores = scores;
  r.order.resize(scores.size());
  std::iota(r.order.begin(), r.order.end(), 0);
  std::sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return r;
}

inline bool has_positive(const RankedList& r) {
  return std::any_of(r.labels.begin(), r.labels.end(),
                     [](int l) { return l == 1; });
}

inline double average_precision(const RankedList& r) {
  if (!has_positive(r)) throw NoPositive(r.qid);
  double hits = 0.0, sum = 0.0;
  for (std::size_t k = 0; k < r.order.size(); ++k) {
    if (r.labels[r.order[k]] == 1) {
      hits += 1.0;
      sum += hits / static_cast<double>(k + 1);
    }
  }
  return sum / hits;
}

inline double reciprocal_rank(const RankedList& r) {
  if (!has_positive(r)) throw NoPositive(r.qid);
  for (std::size_t k = 0; k < r.order.size(); ++k)
    if (r.labels[r.order[k]] == 1) return 1.0 / static_cast<double>(k + 1);
  return 0.0;  // unreachable
}

inline double precision_at_1(const RankedList& r) {
  if (r.order.empty()) return 0.0;
  return r.labels[r.order[0]] == 1 ? 1.0 : 0.0;
}

struct EvalReport {
  double map = 0.0;
  double mrr = 0.0;
  double p_at_1 = 0.0;
  double top1_accuracy = 0.0;
  std::size_t n_questions_scored = 0;
  std::size_t n_questions_skipped = 0;  // no positive label
};

// Aggregates rankings. MAP/MRR average over questions with at least one
// positive; P@1 / top-1 accuracy average over all questions.
inline EvalReport aggregate_rankings(const std::vector<RankedList>& rankings) {
  EvalReport rep;
  double ap = 0.0, rr = 0.0, p1 = 0.0;
  for (const auto& r : rankings) {
    p1 += precision_at_1(r);
    if (has_positive(r)) {
      ap += average_precision(r);
      rr += reciprocal_rank(r);
      ++rep.n_questions_scored;
    } else {
      ++rep.n_questions_skipped;
    }
  }
  if (rep.n_questions_scored > 0) {
    rep.map = ap / static_cast<double>(rep.n_questions_scored);
    rep.mrr = rr / static_cast<double>(rep.n_questions_scored);
  }
  if (!rankings.empty()) {
    rep.p_at_1 = p1 / static_cast<double>(rankings.size());
    rep.top1_accuracy = rep.p_at_1;
  }
  return rep;
}

// A question to score: qid plus per-candidate labels. The scorer is called
// with the candidate's original index.
struct ScorableQuestion {
  std::string qid;
  std::vector<int> labels;
};

inline std::vector<RankedList> score_questions(
    const std::vector<ScorableQuestion>& questions,
    const std::function<double(std::size_t q, std::size_t cand)>& scorer) {
  std::vector<RankedList> rankings;
  rankings.reserve(questions.size());
  for (std::size_t q = 0; q < questions.size(); ++q) {
    std::vector<double> scores(questions[q].labels.size());
    for (std::size_t c = 0; c < scores.size(); ++c) scores[c] = scorer(q, c);
    rankings.push_back(
        rank_candidates(questions[q].qid, scores, questions[q].labels));
  }
  return rankings;
}

inline EvalReport evaluate_questions(
    const std::vector<ScorableQuestion>& questions,
    const std::function<double(std::size_t, std::size_t)>& scorer) {
  return aggregate_rankings(score_questions(questions, scorer));
}

// Report file: one "key value" line per metric, fixed order and formatting.
inline std::string format_report(const EvalReport& r) {
  std::string out;
  char buf[64];
  auto kv = [&](const char* k, double v) {
    std::snprintf(buf, sizeof(buf), "%s %.12f\n", k, v);
    out += buf;
  };
  kv("map", r.map);
  kv("mrr", r.mrr);
  kv("p_at_1", r.p_at_1);
  kv("top1_accuracy", r.top1_accuracy);
  out += "n_questions_scored " + std::to_string(r.n_questions_scored) + "\n";
  out += "n_questions_skipped " + std::to_string(r.n_questions_skipped) + "\n";
  return out;
}

// Run file: "qid \t candidate_index \t score \t label" per candidate, in
// ranked order per question.
inline std::string format_run_file(const std::vector<RankedList>& rankings) {
  std::string out;
  char buf[64];
  for (const auto& r : rankings) {
    for (std::size_t k = 0; k < r.order.size(); ++k) {
      std::size_t c = r.order[k];
      std::snprintf(buf, sizeof(buf), "%.12f", r.scores[c]);
      out += r.qid + "\t" + std::to_string(c) + "\t" + buf + "\t" +
             std::to_string(r.labels[c]) + "\n";
    }
  }
  return out;
}

}  // namespace ckann
