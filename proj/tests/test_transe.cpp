#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ckann/kg.hpp"
#include "ckann/transe.hpp"
#include "test_util.hpp"

using namespace ckann;

namespace {
// Each relation shifts entity i to entity (i + offset) mod n: perfectly
// translational, so training has a clean optimum.
KnowledgeGraph ring_kg(std::size_t n_entities, std::size_t n_relations) {
  KnowledgeGraph kg;
  for (std::size_t i = 0; i < n_entities; ++i)
    kg.intern_entity("e" + std::to_string(i));
  for (std::size_t r = 0; r < n_relations; ++r)
    kg.intern_relation("r" + std::to_string(r));
  for (std::size_t r = 0; r < n_relations; ++r) {
    std::size_t offset = r + 1;
    for (std::size_t i = 0; i < n_entities; ++i)
      kg.add_triple({static_cast<EntityId>(i), static_cast<RelationId>(r),
                     static_cast<EntityId>((i + offset) % n_entities)});
  }
  return kg;
}
}  // namespace

TEST_CASE("distance of an exact translation is zero") {
  CHECK(transe_distance({1, 0}, {0, 1}, {1, 1}, Norm::L2) ==
        Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("distance matches the 3-4-5 triangle") {
  CHECK(transe_distance({0, 0}, {0, 0}, {3, 4}, Norm::L2) == Catch::Approx(5.0));
  CHECK(transe_distance({0, 0}, {0, 0}, {3, 4}, Norm::L1) == Catch::Approx(7.0));
}

TEST_CASE("distance rejects mismatched dimensions") {
  CHECK_THROWS_AS(transe_distance({1, 0}, {0}, {1, 1}, Norm::L2),
                  DimensionMismatch);
}

TEST_CASE("initial entity rows are unit length") {
  auto kg = ring_kg(20, 2);
  TransEConfig cfg;
  cfg.dim = 4;
  cfg.seed = 3;
  auto table = init_embeddings(kg, cfg);
  for (std::size_t e = 0; e < table.n_entities; ++e) {
    double s = 0;
    for (std::size_t j = 0; j < 4; ++j)
      s += table.entity(e)[j] * table.entity(e)[j];
    CHECK(std::abs(std::sqrt(s) - 1.0) <= 1e-9);
  }
  // unnormalized rows keep the sampling range
  double bound = 6.0 / 2.0;
  for (double v : table.relation_vectors) {
    CHECK(v >= -bound);
    CHECK(v <= bound);
  }
}

TEST_CASE("initialization is bit-deterministic per seed") {
  auto kg = ring_kg(15, 2);
  TransEConfig cfg;
  cfg.dim = 8;
  cfg.seed = 11;
  auto a = init_embeddings(kg, cfg);
  auto b = init_embeddings(kg, cfg);
  CHECK(a.entity_vectors == b.entity_vectors);
  CHECK(a.relation_vectors == b.relation_vectors);
}

TEST_CASE("negative sampling corrupts exactly one slot") {
  auto kg = ring_kg(30, 3);
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const Triple& pos = kg.triples()[rng.uniform_index(kg.triples().size())];
    Triple neg = negative_sample(pos, kg, rng);
    CHECK(neg.relation == pos.relation);
    bool head_changed = neg.head != pos.head;
    bool tail_changed = neg.tail != pos.tail;
    CHECK(head_changed != tail_changed);
    CHECK_FALSE(kg.has_triple(neg));
  }
}

TEST_CASE("negative sampling gives up after the retry budget") {
  KnowledgeGraph kg;
  kg.intern_entity("a");
  kg.intern_relation("r");
  kg.add_triple({0, 0, 0});
  Rng rng(6);
  Triple neg = negative_sample(kg.triples()[0], kg, rng);
  CHECK(neg == kg.triples()[0]);  // only possible draw, returned uncomplainingly
}

TEST_CASE("zero training epochs return the initialization") {
  auto kg = ring_kg(12, 1);
  TransEConfig cfg;
  cfg.dim = 6;
  cfg.seed = 9;
  cfg.epochs = 0;
  auto trained = train_transe(kg, cfg);
  auto init = init_embeddings(kg, cfg);
  CHECK(trained.table.entity_vectors == init.entity_vectors);
  CHECK(trained.table.relation_vectors == init.relation_vectors);
  CHECK(trained.loss_trace.empty());
}

TEST_CASE("training reduces the margin loss on a small graph") {
  auto kg = ring_kg(20, 2);
  TransEConfig cfg;
  cfg.dim = 8;
  cfg.seed = 1;
  cfg.epochs = 30;
  cfg.learning_rate = 0.05;
  auto result = train_transe(kg, cfg);
  REQUIRE(result.loss_trace.size() == 30);
  double first = (result.loss_trace[0] + result.loss_trace[1] + result.loss_trace[2]) / 3;
  double last = (result.loss_trace[27] + result.loss_trace[28] + result.loss_trace[29]) / 3;
  CHECK(last < first);
  // entity rows stay normalized after every epoch
  for (std::size_t e = 0; e < result.table.n_entities; ++e) {
    double s = 0;
    for (std::size_t j = 0; j < cfg.dim; ++j)
      s += result.table.entity(e)[j] * result.table.entity(e)[j];
    CHECK(std::abs(std::sqrt(s) - 1.0) <= 1e-6);
  }
}

TEST_CASE("training is deterministic per seed") {
  auto kg = ring_kg(15, 2);
  TransEConfig cfg;
  cfg.dim = 6;
  cfg.seed = 17;
  cfg.epochs = 5;
  auto a = train_transe(kg, cfg);
  auto b = train_transe(kg, cfg);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.table.entity_vectors == b.table.entity_vectors);
}

TEST_CASE("embedding table save and load round-trips") {
  auto kg = ring_kg(10, 2);
  TransEConfig cfg;
  cfg.dim = 5;
  cfg.seed = 2;
  auto table = init_embeddings(kg, cfg);
  auto path = test_util::temp_path("emb_rt.txt");
  save_table(table, path);
  auto loaded = load_table(path, &kg, 5);
  REQUIRE(loaded.entity_vectors.size() == table.entity_vectors.size());
  for (std::size_t i = 0; i < table.entity_vectors.size(); ++i)
    CHECK(std::abs(loaded.entity_vectors[i] - table.entity_vectors[i]) <= 1e-12);
  for (std::size_t i = 0; i < table.relation_vectors.size(); ++i)
    CHECK(std::abs(loaded.relation_vectors[i] - table.relation_vectors[i]) <= 1e-12);
}

TEST_CASE("loading rejects entity-count mismatches") {
  auto kg = ring_kg(10, 2);
  TransEConfig cfg;
  cfg.dim = 5;
  auto path = test_util::temp_path("emb_mismatch.txt");
  save_table(init_embeddings(kg, cfg), path);
  auto other = ring_kg(11, 2);
  CHECK_THROWS_AS(load_table(path, &other, 5), FormatError);
}

TEST_CASE("loading rejects dim mismatches") {
  auto kg = ring_kg(10, 2);
  TransEConfig cfg;
  cfg.dim = 5;
  auto path = test_util::temp_path("emb_dim.txt");
  save_table(init_embeddings(kg, cfg), path);
  CHECK_THROWS_AS(load_table(path, &kg, 6), FormatError);
}

TEST_CASE("distance is symmetric under reversing the translation") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> h(6), r(6), t(6);
    for (std::size_t j = 0; j < 6; ++j) {
      h[j] = rng.uniform(-1, 1);
      r[j] = rng.uniform(-1, 1);
      t[j] = rng.uniform(-1, 1);
    }
    std::vector<double> neg_r(6);
    for (std::size_t j = 0; j < 6; ++j) neg_r[j] = -r[j];
    CHECK(transe_distance(h, r, t, Norm::L2) ==
          Catch::Approx(transe_distance(t, neg_r, h, Norm::L2)).margin(1e-12));
  }
}
