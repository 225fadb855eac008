#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "ckann/data.hpp"
#include "ckann/metrics.hpp"
#include "test_util.hpp"

using namespace ckann;
using test_util::write_tmp;

TEST_CASE("tokenize lowers case and detaches punctuation") {
  auto toks = tokenize("Who wrote \"What 's My Name\" for Rihanna?");
  CHECK(toks == std::vector<std::string>{"who", "wrote", "\"", "what", "'s",
                                         "my", "name", "\"", "for", "rihanna",
                                         "?"});
}

TEST_CASE("tokenize truncates to the requested length") {
  std::string text;
  for (int i = 0; i < 60; ++i) text += "tok" + std::to_string(i) + " ";
  CHECK(tokenize(text, 40).size() == 40);
}

TEST_CASE("load_dataset parses labeled records") {
  auto path = write_tmp(
      "ds_ok.jsonl",
      R"({"qid":"q1","question":"Where is it","candidates":[{"text":"Here","label":1},{"text":"There","label":0},{"text":"Nowhere","label":0}]})"
      "\n");
  auto insts = load_dataset(path);
  REQUIRE(insts.size() == 1);
  CHECK(insts[0].qid == "q1");
  CHECK(insts[0].candidates.size() == 3);
  CHECK(insts[0].candidates[0].label == 1);
  CHECK(insts[0].question_tokens == std::vector<std::string>{"where", "is", "it"});
}

TEST_CASE("load_dataset rejects empty candidate lists") {
  auto path = write_tmp(
      "ds_empty.jsonl", R"({"qid":"q1","question":"x","candidates":[]})" "\n");
  CHECK_THROWS_AS(load_dataset(path), EmptyCandidates);
}

TEST_CASE("load_dataset rejects labels outside 0/1") {
  auto path = write_tmp(
      "ds_label.jsonl",
      R"({"qid":"q1","question":"x","candidates":[{"text":"y","label":2}]})" "\n");
  CHECK_THROWS_AS(load_dataset(path), LabelError);
}

TEST_CASE("load_dataset reports malformed lines") {
  auto path = write_tmp("ds_bad.jsonl", "{not json}\n");
  try {
    load_dataset(path);
    FAIL("expected MalformedRecord");
  } catch (const MalformedRecord& e) {
    CHECK(e.line == 1);
  }
}

TEST_CASE("long answers truncate to the maximum length") {
  std::string answer;
  for (int i = 0; i < 60; ++i) answer += "w" + std::to_string(i) + " ";
  nlohmann::json j;
  j["qid"] = "q";
  j["question"] = "short question";
  j["candidates"] = {{{"text", answer}, {"label", 1}}};
  auto path = write_tmp("ds_long.jsonl", j.dump() + "\n");
  auto insts = load_dataset(path);
  CHECK(insts[0].candidates[0].tokens.size() == 40);
}

TEST_CASE("datasets survive a save-load round-trip") {
  SyntheticSpec spec;
  spec.n_entities = 40;
  spec.n_questions = 12;
  spec.vocab_size = 50;
  spec.seed = 3;
  auto data = generate_synthetic(spec);
  auto path = test_util::temp_path("ds_rt.jsonl");
  save_dataset(data.train, path);
  auto loaded = load_dataset(path);
  REQUIRE(loaded.size() == data.train.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].qid == data.train[i].qid);
    CHECK(loaded[i].question_tokens == data.train[i].question_tokens);
    REQUIRE(loaded[i].candidates.size() == data.train[i].candidates.size());
    for (std::size_t c = 0; c < loaded[i].candidates.size(); ++c) {
      CHECK(loaded[i].candidates[c].tokens == data.train[i].candidates[c].tokens);
      CHECK(loaded[i].candidates[c].label == data.train[i].candidates[c].label);
    }
  }
}

TEST_CASE("idf follows the smoothed formula") {
  auto path = write_tmp(
      "ds_idf.jsonl",
      R"({"qid":"a","question":"common alpha","candidates":[{"text":"common beta","label":1}]})"
      "\n"
      R"({"qid":"b","question":"common gamma","candidates":[{"text":"common delta","label":0}]})"
      "\n");
  auto insts = load_dataset(path);
  auto idf = compute_idf(insts);
  // four documents in total; "common" appears in all of them
  CHECK(idf("common") == Catch::Approx(std::log(5.0 / 5.0) + 1.0));
  CHECK(idf("alpha") == Catch::Approx(std::log(5.0 / 2.0) + 1.0));
  CHECK(idf("never-seen") == Catch::Approx(std::log(5.0) + 1.0));
  CHECK(idf("alpha") > idf("common"));
  CHECK(idf("never-seen") > idf("alpha"));
}

TEST_CASE("overlap of identical non-stopword sentences is one half") {
  IdfTable idf;
  auto f = overlap_features({"cats", "chase", "mice"},
                            {"cats", "chase", "mice"}, idf, {});
  CHECK(f[0] == Catch::Approx(0.5));
  CHECK(f[1] == Catch::Approx(0.5));
  CHECK(f[2] == Catch::Approx(0.5));
  CHECK(f[3] == Catch::Approx(0.5));
}

TEST_CASE("overlap of disjoint vocabularies is zero") {
  IdfTable idf;
  auto f = overlap_features({"a", "b"}, {"c", "d"}, idf, {});
  for (double x : f) CHECK(x == 0.0);
}

TEST_CASE("stopword-only overlap zeroes the filtered components") {
  IdfTable idf;
  auto f = overlap_features({"the", "cat"}, {"the", "dog"}, idf, {"the"});
  CHECK(f[0] > 0.0);
  CHECK(f[2] == 0.0);
  CHECK(f[3] == 0.0);
}

TEST_CASE("word table reserves a frozen zero pad row") {
  auto path = write_tmp(
      "ds_vocab.jsonl",
      R"({"qid":"a","question":"alpha beta","candidates":[{"text":"gamma","label":1}]})"
      "\n");
  auto insts = load_dataset(path);
  std::map<std::string, std::vector<double>> vectors;
  vectors["alpha"] = {1.0, 2.0, 3.0};
  auto table = build_word_table(insts, vectors, 3, 5);
  REQUIRE(table.size() == 2 + 3);
  for (std::size_t j = 0; j < 3; ++j) CHECK(table.matrix[kPadIndex * 3 + j] == 0.0);
  // file-backed token takes the file vector
  auto row = table.lookup("alpha");
  CHECK(table.matrix[row * 3 + 0] == 1.0);
  // unknown tokens hit the OOV row
  CHECK(table.lookup("martian") == kOovIndex);
  // random rows stay inside the init range
  auto grow = table.lookup("gamma");
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(table.matrix[grow * 3 + j] <= 0.1);
    CHECK(table.matrix[grow * 3 + j] >= -0.1);
  }
}

TEST_CASE("synthetic generation is byte-identical per seed") {
  SyntheticSpec spec;
  spec.n_entities = 50;
  spec.n_questions = 20;
  spec.vocab_size = 60;
  spec.seed = 9;
  auto dir_a = test_util::temp_path("syn_a");
  auto dir_b = test_util::temp_path("syn_b");
  std::filesystem::create_directories(dir_a);
  std::filesystem::create_directories(dir_b);
  save_synthetic(generate_synthetic(spec), dir_a);
  save_synthetic(generate_synthetic(spec), dir_b);
  for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl",
                        "kg_triples.tsv", "kg_aliases.tsv",
                        "word_embeddings.txt"}) {
    CHECK(read_file(dir_a + "/" + std::string(f)) ==
          read_file(dir_b + "/" + std::string(f)));
  }
}

TEST_CASE("planted signal links exactly one candidate per question") {
  SyntheticSpec spec;
  spec.n_entities = 60;
  spec.n_questions = 30;
  spec.vocab_size = 80;
  spec.seed = 4;
  spec.signal_strength = 1.0;
  auto data = generate_synthetic(spec);
  auto subject_of = [&](const QAInstance& inst) {
    for (const auto& t : inst.question_tokens)
      if (data.kg.has_entity(t)) return data.kg.entity_id(t);
    FAIL("question without subject entity");
    return EntityId(0);
  };
  auto all = data.train;
  all.insert(all.end(), data.dev.begin(), data.dev.end());
  all.insert(all.end(), data.test.begin(), data.test.end());
  for (const auto& inst : all) {
    EntityId subject = subject_of(inst);
    std::size_t linked = 0;
    for (const auto& cand : inst.candidates) {
      bool adj = false;
      for (const auto& t : cand.tokens)
        if (data.kg.has_entity(t) &&
            data.kg.adjacent(subject, data.kg.entity_id(t)))
          adj = true;
      if (adj) {
        ++linked;
        CHECK(cand.label == 1);
      }
    }
    CHECK(linked == 1);
  }
}

TEST_CASE("zero signal plants no links") {
  SyntheticSpec spec;
  spec.n_entities = 60;
  spec.n_questions = 20;
  spec.vocab_size = 80;
  spec.seed = 5;
  spec.signal_strength = 0.0;
  auto data = generate_synthetic(spec);
  for (const auto& inst : data.train) {
    EntityId subject = 0;
    for (const auto& t : inst.question_tokens)
      if (data.kg.has_entity(t)) subject = data.kg.entity_id(t);
    for (const auto& cand : inst.candidates)
      for (const auto& t : cand.tokens)
        if (data.kg.has_entity(t))
          CHECK_FALSE(data.kg.adjacent(subject, data.kg.entity_id(t)));
  }
}

TEST_CASE("adjacency oracle reaches perfect MAP on planted data") {
  SyntheticSpec spec;
  spec.n_entities = 80;
  spec.n_questions = 40;
  spec.vocab_size = 100;
  spec.seed = 6;
  spec.signal_strength = 1.0;
  auto data = generate_synthetic(spec);
  std::vector<ScorableQuestion> qs;
  std::vector<const QAInstance*> insts;
  for (const auto& inst : data.test) {
    qs.push_back({inst.qid, {}});
    for (const auto& c : inst.candidates) qs.back().labels.push_back(c.label);
    insts.push_back(&inst);
  }
  auto rep = evaluate_questions(qs, [&](std::size_t q, std::size_t c) {
    EntityId subject = 0;
    for (const auto& t : insts[q]->question_tokens)
      if (data.kg.has_entity(t)) subject = data.kg.entity_id(t);
    for (const auto& t : insts[q]->candidates[c].tokens)
      if (data.kg.has_entity(t) &&
          data.kg.adjacent(subject, data.kg.entity_id(t)))
        return 1.0;
    return 0.0;
  });
  CHECK(rep.map == 1.0);
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec bad;
  bad.n_entities = 2;
  CHECK_THROWS_AS(generate_synthetic(bad), SyntheticSpecError);
  SyntheticSpec bad2;
  bad2.signal_strength = 1.5;
  CHECK_THROWS_AS(generate_synthetic(bad2), SyntheticSpecError);
}
