#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ckann/metrics.hpp"

using namespace ckann;

namespace {
RankedList ranked(const std::vector<int>& labels_in_rank_order) {
  // scores descending by construction so the order is the identity
  std::vector<double> scores;
  for (std::size_t i = 0; i < labels_in_rank_order.size(); ++i)
    scores.push_back(static_cast<double>(labels_in_rank_order.size() - i));
  return rank_candidates("q", scores, labels_in_rank_order);
}
}  // namespace

TEST_CASE("average precision of a perfect ranking") {
  CHECK(average_precision(ranked({1, 0, 0})) == 1.0);
}

TEST_CASE("average precision hand values") {
  CHECK(average_precision(ranked({1, 0, 1, 0})) ==
        Catch::Approx((1.0 + 2.0 / 3.0) / 2.0).margin(1e-12));
  CHECK(average_precision(ranked({0, 0, 1, 1})) ==
        Catch::Approx((1.0 / 3.0 + 2.0 / 4.0) / 2.0).margin(1e-12));
}

TEST_CASE("average precision needs a positive") {
  CHECK_THROWS_AS(average_precision(ranked({0, 0})), NoPositive);
}

TEST_CASE("reciprocal rank and precision at 1") {
  CHECK(reciprocal_rank(ranked({0, 0, 1})) == Catch::Approx(1.0 / 3.0));
  CHECK(precision_at_1(ranked({1, 0})) == 1.0);
  CHECK(precision_at_1(ranked({0, 1})) == 0.0);
}

TEST_CASE("top-1 accuracy averages over questions") {
  auto rep = aggregate_rankings({ranked({1, 0}), ranked({0, 1})});
  CHECK(rep.top1_accuracy == Catch::Approx(0.5));
  CHECK(rep.n_questions_scored == 2);
}

TEST_CASE("ties break by ascending original index") {
  auto r = rank_candidates("q", {0.5, 0.5, 0.5}, {0, 1, 0});
  CHECK(r.order == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("oracle scorer gives perfect metrics") {
  std::vector<ScorableQuestion> qs = {
      {"q0", {0, 1, 0}}, {"q1", {1, 0}}, {"q2", {0, 0, 1, 0}}};
  auto rep = evaluate_questions(
      qs, [&](std::size_t q, std::size_t c) {
        return static_cast<double>(qs[q].labels[c]);
      });
  CHECK(rep.map == 1.0);
  CHECK(rep.mrr == 1.0);
  CHECK(rep.p_at_1 == 1.0);
}

TEST_CASE("constant scorer equals identity ordering") {
  std::vector<ScorableQuestion> qs = {{"q0", {0, 1, 0, 1}}};
  auto rep_const =
      evaluate_questions(qs, [](std::size_t, std::size_t) { return 0.25; });
  auto rep_identity = evaluate_questions(
      qs, [&](std::size_t, std::size_t c) {
        return static_cast<double>(qs[0].labels.size() - c);
      });
  CHECK(rep_const.map == Catch::Approx(rep_identity.map).margin(1e-15));
  CHECK(rep_const.mrr == Catch::Approx(rep_identity.mrr).margin(1e-15));
}

TEST_CASE("three-question fixture matches hand-computed mean") {
  std::vector<ScorableQuestion> qs = {
      {"a", {1, 0, 1, 0}}, {"b", {0, 0, 1, 1}}, {"c", {1, 0, 0}}};
  auto rep = evaluate_questions(qs, [&](std::size_t q, std::size_t c) {
    return static_cast<double>(qs[q].labels.size() - c);
  });
  double expected =
      ((1.0 + 2.0 / 3.0) / 2.0 + (1.0 / 3.0 + 2.0 / 4.0) / 2.0 + 1.0) / 3.0;
  CHECK(std::abs(rep.map - expected) <= 1e-12);
}

TEST_CASE("questions without positives are skipped but counted") {
  std::vector<ScorableQuestion> qs = {{"a", {1, 0}}, {"b", {0, 0}}};
  auto rep = evaluate_questions(
      qs, [](std::size_t, std::size_t c) { return -static_cast<double>(c); });
  CHECK(rep.n_questions_scored == 1);
  CHECK(rep.n_questions_skipped == 1);
  CHECK(rep.map == 1.0);
  // P@1 still averages over both questions
  CHECK(rep.p_at_1 == Catch::Approx(0.5));
}

TEST_CASE("metrics are invariant under monotone score transforms") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t n = 2 + rng.uniform_index(6);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool pos = false;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = rng.uniform(-3, 3);
      labels[i] = rng.coin() ? 1 : 0;
      pos = pos || labels[i] == 1;
    }
    if (!pos) labels[0] = 1;
    auto base = rank_candidates("q", scores, labels);
    std::vector<double> warped(n);
    for (std::size_t i = 0; i < n; ++i)
      warped[i] = std::exp(2.0 * scores[i]) + 5.0;
    auto trans = rank_candidates("q", warped, labels);
    CHECK(average_precision(base) == Catch::Approx(average_precision(trans)));
    CHECK(reciprocal_rank(base) == Catch::Approx(reciprocal_rank(trans)));
    CHECK(precision_at_1(base) == precision_at_1(trans));
  }
}

TEST_CASE("report and run file formatting are stable") {
  std::vector<ScorableQuestion> qs = {{"q0", {0, 1}}};
  auto rankings = score_questions(
      qs, [](std::size_t, std::size_t c) { return c == 1 ? 0.9 : 0.1; });
  auto rep = aggregate_rankings(rankings);
  auto text = format_report(rep);
  CHECK(text.find("map 1.000000000000") != std::string::npos);
  auto run = format_run_file(rankings);
  CHECK(run.find("q0\t1\t0.900000000000\t1\n") == 0);
}
