#include <catch2/catch_amalgamated.hpp>

#include "ckann/kg.hpp"
#include "ckann/linking.hpp"

using namespace ckann;

namespace {
struct Fixture {
  KnowledgeGraph kg;
  AliasDictionary dict;

  EntityId add_entity(const std::string& name) { return kg.intern_entity(name); }
};

Fixture city_fixture() {
  Fixture f;
  auto nyc = f.add_entity("new_york_city");
  auto ny = f.add_entity("new_york_state");
  f.dict.add("new york city", nyc, 0.9);
  f.dict.add("new york", ny, 0.7);
  return f;
}
}  // namespace

TEST_CASE("longest n-gram match wins") {
  auto f = city_fixture();
  auto mentions = detect_mentions({"new", "york", "city"}, f.dict, 3, 0.2);
  REQUIRE(mentions.size() == 1);
  CHECK(mentions[0].start == 0);
  CHECK(mentions[0].length == 3);
  CHECK(mentions[0].surface == "new york city");
  CHECK(mentions[0].confidence == Catch::Approx(0.9));
}

TEST_CASE("matches below the confidence threshold are skipped") {
  Fixture f;
  f.dict.add("longshot", f.add_entity("longshot"), 0.1);
  CHECK(detect_mentions({"longshot"}, f.dict, 4, 0.2).empty());
  CHECK(detect_mentions({"longshot"}, f.dict, 4, 0.05).size() == 1);
}

TEST_CASE("greedy scan yields disjoint mentions") {
  Fixture f;
  f.dict.add("nobel prize", f.add_entity("nobel_prize"), 0.8);
  f.dict.add("alfred nobel", f.add_entity("alfred_nobel"), 0.8);
  auto mentions = detect_mentions(
      {"the", "nobel", "prize", "was", "created", "by", "alfred", "nobel"},
      f.dict, 4, 0.2);
  REQUIRE(mentions.size() == 2);
  CHECK(mentions[0].start == 1);
  CHECK(mentions[0].length == 2);
  CHECK(mentions[1].start == 6);
  CHECK(mentions[1].length == 2);
  // spans never overlap and arrive sorted by start
  CHECK(mentions[0].start + mentions[0].length <= mentions[1].start);
}

TEST_CASE("matching ignores token case") {
  auto f = city_fixture();
  auto upper = detect_mentions({"New", "YORK", "City"}, f.dict, 3, 0.2);
  auto lower = detect_mentions({"new", "york", "city"}, f.dict, 3, 0.2);
  REQUIRE(upper.size() == lower.size());
  CHECK(upper[0].surface == lower[0].surface);
}

TEST_CASE("attach_candidates keeps the top K by prior") {
  Fixture f;
  for (int i = 0; i < 7; ++i)
    f.dict.add("x", f.add_entity("x" + std::to_string(i)), 0.1 * (i + 1));
  auto mentions = detect_mentions({"x"}, f.dict, 1, 0.2);
  auto sets = attach_candidates(mentions, f.dict, 5);
  REQUIRE(sets.size() == 1);
  REQUIRE(sets[0].candidates.size() == 5);
  for (std::size_t i = 0; i + 1 < 5; ++i) {
    REQUIRE(sets[0].candidates[i].entity.has_value());
    CHECK(sets[0].candidates[i].prior >= sets[0].candidates[i + 1].prior);
  }
  CHECK(sets[0].candidates[0].prior == Catch::Approx(0.7));
}

TEST_CASE("attach_candidates pads with nulls") {
  Fixture f;
  f.dict.add("y", f.add_entity("y0"), 0.9);
  f.dict.add("y", f.add_entity("y1"), 0.5);
  auto sets = attach_candidates(detect_mentions({"y"}, f.dict, 1, 0.2), f.dict, 5);
  REQUIRE(sets[0].candidates.size() == 5);
  CHECK(sets[0].candidates[0].entity.has_value());
  CHECK(sets[0].candidates[1].entity.has_value());
  for (std::size_t i = 2; i < 5; ++i)
    CHECK_FALSE(sets[0].candidates[i].entity.has_value());
}

TEST_CASE("attach_candidates with K 1 keeps the argmax") {
  Fixture f;
  f.dict.add("z", f.add_entity("z0"), 0.3);
  f.dict.add("z", f.add_entity("z1"), 0.8);
  auto sets = attach_candidates(detect_mentions({"z"}, f.dict, 1, 0.2), f.dict, 1);
  REQUIRE(sets[0].candidates.size() == 1);
  CHECK(*sets[0].candidates[0].entity == f.kg.entity_id("z1"));
}

TEST_CASE("attach_candidates rejects unknown surfaces") {
  Fixture f;
  f.add_entity("a");
  Mention m{0, 1, "ghost", 0.9};
  CHECK_THROWS_AS(attach_candidates({m}, f.dict, 3), UnknownSurface);
}

TEST_CASE("knowledge sequence with no mentions is empty") {
  auto seq = build_knowledge_sequence({"just", "words"}, {});
  CHECK(seq.mention_level.empty());
  for (const auto& slot : seq.token_aligned) CHECK_FALSE(slot.has_value());
}

TEST_CASE("tokens inside a mention share one candidate set") {
  Fixture f;
  f.dict.add("alfred nobel", f.add_entity("alfred_nobel"), 0.8);
  std::vector<std::string> tokens = {"a", "b", "c", "alfred", "nobel", "d"};
  auto seq = build_knowledge_sequence(
      tokens, attach_candidates(detect_mentions(tokens, f.dict, 4, 0.2), f.dict, 3));
  for (std::size_t t : {0u, 1u, 2u, 5u}) CHECK_FALSE(seq.token_aligned[t].has_value());
  REQUIRE(seq.token_aligned[3].has_value());
  REQUIRE(seq.token_aligned[4].has_value());
  CHECK(*seq.token_aligned[3] == *seq.token_aligned[4]);
  CHECK(seq.mention_level == std::vector<EntityId>{f.kg.entity_id("alfred_nobel")});
}

TEST_CASE("consecutive duplicate resolutions collapse") {
  Fixture f;
  auto e = f.add_entity("echo");
  f.dict.add("echo", e, 0.9);
  std::vector<std::string> tokens = {"echo", "echo"};
  auto seq = build_knowledge_sequence(
      tokens, attach_candidates(detect_mentions(tokens, f.dict, 1, 0.2), f.dict, 2));
  CHECK(seq.candidate_sets.size() == 2);
  CHECK(seq.mention_level.size() == 1);
}

TEST_CASE("mention spans are pairwise disjoint on random inputs") {
  Fixture f;
  f.dict.add("a b", f.add_entity("ab"), 0.9);
  f.dict.add("b c", f.add_entity("bc"), 0.9);
  f.dict.add("c", f.add_entity("c_alone"), 0.9);
  Rng rng(11);
  std::vector<std::string> alphabet = {"a", "b", "c", "d"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> tokens;
    std::size_t len = 1 + rng.uniform_index(10);
    for (std::size_t i = 0; i < len; ++i)
      tokens.push_back(alphabet[rng.uniform_index(alphabet.size())]);
    auto mentions = detect_mentions(tokens, f.dict, 4, 0.2);
    for (std::size_t i = 0; i + 1 < mentions.size(); ++i) {
      CHECK(mentions[i].start + mentions[i].length <= mentions[i + 1].start);
      CHECK(mentions[i].start + mentions[i].length <= tokens.size());
    }
  }
}
