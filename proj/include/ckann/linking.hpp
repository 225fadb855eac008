#pragma once

// Dictionary-based entity mention detection: greedy left-to-right longest
// n-gram match against the alias dictionary, then top-K candidate retrieval
// per mention. Pure functions over immutable inputs.

#include <optional>
#include <string>
#include <vector>

#include "ckann/common.hpp"
#include "ckann/kg.hpp"

namespace ckann {

struct Mention {
  std::size_t start = 0;   // token index
  std::size_t length = 0;  // token count
  std::string surface;     // lowercased, space-joined
  double confidence = 0.0; // top prior of the matched surface
};

// Slot in a fixed-size candidate list; empty entity means a NULL pad that
// embeds as the zero vector downstream.
struct CandidateSlot {
  std::optional<EntityId> entity;
  double prior = 0.0;
};

struct CandidateSet {
  Mention mention;
  std::vector<CandidateSlot> candidates;  // exactly K, non-NULL first
};

struct KnowledgeSequence {
  // One slot per token; positions inside a multi-token mention share the
  // index of that mention's CandidateSet.
  std::vector<std::optional<std::size_t>> token_aligned;
  std::vector<CandidateSet> candidate_sets;
  // Mention-level view: each mention resolved to its top-prior entity,
  // consecutive duplicates collapsed.
  std::vector<EntityId> mention_level;
};

inline std::vector<Mention> detect_mentions(
    const std::vector<std::string>& tokens, const AliasDictionary& aliases,
    std::size_t max_ngram = 4, double threshold = 0.2) {
  if (max_ngram < 1) throw ConfigError("max_ngram must be >= 1");
  std::vector<std::string> lowered(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i)
    lowered[i] = lowercase(tokens[i]);

  std::vector<Mention> mentions;
  std::size_t pos = 0;
  while (pos < lowered.size()) {
    std::size_t matched = 0;
    for (std::size_t n = std::min(max_ngram, lowered.size() - pos); n >= 1;
         --n) {
      std::string surface = lowered[pos];
      for (std::size_t k = 1; k < n; ++k) surface += " " + lowered[pos + k];
      const auto* cands = aliases.lookup(surface);
      if (cands && !cands->empty() && cands->front().prior >= threshold) {
        mentions.push_back({pos, n, surface, cands->front().prior});
        matched = n;
        break;
      }
    }
    pos += matched ? matched : 1;
  }
  return mentions;
}

inline std::vector<CandidateSet> attach_candidates(
    const std::vector<Mention>& mentions, const AliasDictionary& aliases,
    std::size_t k) {
  if (k < 1) throw ConfigError("K must be >= 1");
  std::vector<CandidateSet> sets;
  sets.reserve(mentions.size());
  for (const auto& m : mentions) {
    const auto* cands = aliases.lookup(m.surface);
    if (!cands) throw UnknownSurface(m.surface);
    CandidateSet set;
    set.mention = m;
    set.candidates.reserve(k);
    for (std::size_t i = 0; i < k && i < cands->size(); ++i)
      set.candidates.push_back({(*cands)[i].entity, (*cands)[i].prior});
    while (set.candidates.size() < k) set.candidates.push_back({});
    sets.push_back(std::move(set));
  }
  return sets;
}

inline KnowledgeSequence build_knowledge_sequence(
    const std::vector<std::string>& tokens,
    std::vector<CandidateSet> candidate_sets) {
  KnowledgeSequence seq;
  seq.token_aligned.assign(tokens.size(), std::nullopt);
  seq.candidate_sets = std::move(candidate_sets);
  for (std::size_t s = 0; s < seq.candidate_sets.size(); ++s) {
    const Mention& m = seq.candidate_sets[s].mention;
    for (std::size_t t = m.start; t < m.start + m.length; ++t)
      seq.token_aligned.at(t) = s;
    const auto& top = seq.candidate_sets[s].candidates.front();
    if (top.entity &&
        (seq.mention_level.empty() || seq.mention_level.back() != *top.entity))
      seq.mention_level.push_back(*top.entity);
  }
  return seq;
}

inline KnowledgeSequence link_sentence(const std::vector<std::string>& tokens,
                                       const AliasDictionary& aliases,
                                       std::size_t max_ngram, double threshold,
                                       std::size_t k) {
  auto mentions = detect_mentions(tokens, aliases, max_ngram, threshold);
  return build_knowledge_sequence(tokens,
                                  attach_candidates(mentions, aliases, k));
}

}  // namespace ckann
