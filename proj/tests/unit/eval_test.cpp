#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "rsvqa/common/errors.hpp"
#include "rsvqa/eval/metrics.hpp"
#include "support/metric_oracles.hpp"

using namespace rsvqa;
using namespace rsvqa::eval;
using rsvqa::testing::Matrix;

namespace {

PredictionRecord rec(corpus::QuestionType t, bool correct, std::string gold = "yes", std::string pred = "yes") {
  return {"p", "q", t, std::move(gold), std::move(pred), correct};
}

}  // namespace

TEST_CASE("f1 examples") {
  Matrix gold{{1, 0, 1}, {0, 1, 1}};
  auto f = f1_scores(gold, gold);
  CHECK(f.micro == 1.0);
  CHECK(f.average == 1.0);
  auto g = f1_scores(Matrix{{1}}, Matrix{{0}});
  CHECK(g.micro == 0.0);
  CHECK_THROWS_AS(f1_scores(Matrix{{1, 0}}, Matrix{{1}}), InvalidInput);
  CHECK_THROWS_AS(f1_scores(Matrix{{2}}, Matrix{{1}}), InvalidInput);
  CHECK_THROWS_AS(f1_scores(Matrix{{1}}, Matrix{{1}, {0}}), InvalidInput);
}

TEST_CASE("undefined per-class f1 counts as zero with zero weight") {
  // Class 1 never appears in gold or prediction.
  Matrix gold{{1, 0}, {1, 0}}, pred{{1, 0}, {0, 0}};
  auto f = f1_scores(pred, gold);
  CHECK(f.per_class[1] == 0.0);
  CHECK(f.average == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("match ratio and hamming distance examples") {
  Matrix gold(10, std::vector<std::uint8_t>{1, 0, 1});
  CHECK(match_ratio(gold, gold) == 1.0);
  CHECK(hamming_distance(gold, gold) == 0.0);
  auto pred = gold;
  pred[4][1] = 1;
  CHECK(hamming_distance(pred, gold) == doctest::Approx(0.1));
  for (auto& row : pred) row[0] = 0;
  CHECK(match_ratio(pred, gold) == 0.0);
}

TEST_CASE("metrics match brute-force oracles on random instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t q = 1 + rng.index(50), n = 1 + rng.index(10);
    auto gold = rsvqa::testing::random_matrix(rng, q, n, rng.uniform(0.05, 0.6));
    auto pred = rsvqa::testing::random_matrix(rng, q, n, rng.uniform(0.05, 0.6));
    if (trial % 7 == 0) pred = gold;
    const auto f = f1_scores(pred, gold);
    const auto o = rsvqa::testing::oracle_f1(pred, gold);
    REQUIRE(std::abs(f.micro - o.micro) <= 1e-12);
    REQUIRE(std::abs(f.average - o.average) <= 1e-12);
    for (std::size_t c = 0; c < n; ++c) REQUIRE(std::abs(f.per_class[c] - o.per_class[c]) <= 1e-12);
    REQUIRE(std::abs(match_ratio(pred, gold) - rsvqa::testing::oracle_match_ratio(pred, gold)) <= 1e-12);
    REQUIRE(std::abs(hamming_distance(pred, gold) - rsvqa::testing::oracle_hamming(pred, gold)) <= 1e-12);
    // HD = 0 iff MR = 1.
    REQUIRE((hamming_distance(pred, gold) == 0.0) == (match_ratio(pred, gold) == 1.0));
  }
}

TEST_CASE("shard merge equals single pass") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t q = 2 + rng.index(40), n = 1 + rng.index(8);
    auto gold = rsvqa::testing::random_matrix(rng, q, n, 0.3);
    auto pred = rsvqa::testing::random_matrix(rng, q, n, 0.3);
    const std::size_t cut = 1 + rng.index(q - 1);
    ClassificationAccumulator a(n), b(n);
    for (std::size_t i = 0; i < q; ++i) (i < cut ? a : b).add(pred[i], gold[i]);
    ClassificationAccumulator ab = a, ba = b;
    ab.merge(b);
    ba.merge(a);
    const auto whole = classification_metrics(pred, gold);
    for (const auto& m : {ab.result(), ba.result()}) {
      CHECK(m.hd == doctest::Approx(whole.hd).epsilon(1e-14));
      CHECK(m.mr == whole.mr);
      CHECK(m.f1_micro == whole.f1_micro);
      CHECK(m.f1_average == doctest::Approx(whole.f1_average).epsilon(1e-14));
    }
    CHECK(ab.counts() == ba.counts());
  }
}

TEST_CASE("vqa accuracy") {
  using corpus::QuestionType;
  std::vector<PredictionRecord> all;
  for (int i = 0; i < 80; ++i) all.push_back(rec(QuestionType::yes_no, i < 64));
  for (int i = 0; i < 20; ++i) all.push_back(rec(QuestionType::land_cover, i < 4));
  auto acc = vqa_accuracy(all);
  CHECK(*acc.yes_no == doctest::Approx(0.8));
  CHECK(*acc.land_cover == doctest::Approx(0.2));
  CHECK(*acc.overall == doctest::Approx(0.68));

  std::vector<PredictionRecord> yn(all.begin(), all.begin() + 80);
  auto only = vqa_accuracy(yn);
  CHECK_FALSE(only.land_cover.has_value());
  CHECK(*only.overall == *only.yes_no);

  for (auto& r : all) r.correct = true;
  auto perfect = vqa_accuracy(all);
  CHECK(*perfect.yes_no == 1.0);
  CHECK(*perfect.land_cover == 1.0);
  CHECK(*perfect.overall == 1.0);
  CHECK_FALSE(vqa_accuracy({}).overall.has_value());
}

TEST_CASE("bias scores") {
  CHECK(lb_score(0.63, 0.50) == doctest::Approx(0.26));
  CHECK(lb_score(0.52, 0.00004) == doctest::Approx(0.52).epsilon(0.005));
  CHECK(lb_score(0.13, 0.00004) == doctest::Approx(0.13).epsilon(0.005));
  auto even = bias_scores({{"yes", 50}, {"no", 50}});
  CHECK(even.uniform == 0.5);
  CHECK(even.prior == 0.5);
  CHECK(even.lb_score == 0.0);
  auto skew = bias_scores({{"a", 13}, {"b", 87}});
  CHECK(skew.prior == doctest::Approx(0.87));
  CHECK(skew.lb_score == doctest::Approx(0.74));
  CHECK_THROWS_AS(bias_scores({{"yes", 10}}), InvalidInput);
  CHECK_THROWS_AS(bias_scores({{"yes", 10}, {"no", 0}}), InvalidInput);

  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    std::map<std::string, std::size_t> counts;
    const std::size_t k = 2 + rng.index(9);
    for (std::size_t i = 0; i < k; ++i) counts["a" + std::to_string(i)] = 1 + rng.index(50);
    auto b = bias_scores(counts);
    auto o = rsvqa::testing::oracle_bias(counts);
    REQUIRE(std::abs(b.uniform - o.uniform) <= 1e-12);
    REQUIRE(std::abs(b.prior - o.prior) <= 1e-12);
    REQUIRE(std::abs(b.lb_score - o.lb) <= 1e-12);
    REQUIRE(b.lb_score >= 0.0);
    REQUIRE(b.lb_score <= 1.0);
  }
}

TEST_CASE("answer confusion matrix") {
  using corpus::QuestionType;
  std::vector<std::string> vocab{"yes", "no", "None", "Forest"};
  std::vector<PredictionRecord> perfect;
  for (int i = 0; i < 5; ++i) perfect.push_back(rec(QuestionType::yes_no, true, "no", "no"));
  for (int i = 0; i < 3; ++i) perfect.push_back(rec(QuestionType::yes_no, true, "yes", "yes"));
  perfect.push_back(rec(QuestionType::land_cover, true, "Forest", "Forest"));
  auto cm = confusion_matrix(perfect, vocab, 3);
  CHECK(cm.labels == std::vector<std::string>{"no", "yes", "Forest"});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK((cm.counts[i][j] != 0) == (i == j));

  auto noisy = perfect;
  noisy[0].predicted = "yes";
  noisy[1].predicted = "Urban";
  noisy.push_back(rec(QuestionType::land_cover, false, "None", "no"));
  cm = confusion_matrix(noisy, vocab, 2);
  CHECK(cm.counts[0] == std::vector<std::uint64_t>{3, 1, 1});  // gold "no"
  CHECK(cm.counts[1] == std::vector<std::uint64_t>{0, 3, 0});
  for (const auto& row : cm.row_normalized()) {
    double s = 0;
    for (auto v : row) s += v;
    CHECK(s == doctest::Approx(1.0));
  }
  CHECK(cm.log_scaled()[0][0] == doctest::Approx(std::log10(4.0)));
  CHECK(cm.to_csv().rfind("gold\\predicted,no,yes,<other>\nno,3,1,1\n", 0) == 0);
  CHECK_THROWS_AS(confusion_matrix(noisy, vocab, 5), InvalidInput);
}

TEST_CASE("metrics report and prediction dump round trip") {
  MetricsReport r;
  r.model = "late";
  r.split = "test";
  r.dataset_hash = "00ff";
  r.classification = classification_metrics(Matrix{{1, 0}, {1, 1}}, Matrix{{1, 0}, {0, 1}});
  std::vector<PredictionRecord> preds{rec(corpus::QuestionType::yes_no, true),
                                      rec(corpus::QuestionType::land_cover, false, "Forest", "None")};
  r.vqa = vqa_accuracy(preds);
  r.bias = bias_scores({{"yes", 3}, {"no", 1}});
  r.bias_by_type["yes_no"] = *r.bias;
  r.confusion = confusion_matrix(preds, std::vector<std::string>{"yes", "Forest", "None"}, 2);
  const auto text = r.to_json().dump();
  CHECK(MetricsReport::from_json(nlohmann::json::parse(text)).to_json().dump() == text);
  CHECK(r.to_json()["vqa"]["acc_land_cover"] == 0.0);

  auto path = std::filesystem::temp_directory_path() / "rsvqa_eval_preds.jsonl";
  write_predictions(path, preds);
  CHECK(load_predictions(path) == preds);
  std::filesystem::remove(path);
}
