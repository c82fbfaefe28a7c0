#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "rsvqa/common/errors.hpp"
#include "rsvqa/corpus/questions.hpp"
#include "rsvqa/pipelines/training.hpp"
#include "support/gradcheck.hpp"

using namespace rsvqa;
using namespace rsvqa::pipelines;

namespace {

corpus::QARecord qa(std::string answer, corpus::QuestionType t = corpus::QuestionType::land_cover) {
  return {"p", "What classes are present in the image?", t, std::move(answer), corpus::Split::train};
}

nn::Tensor random_tensor(Rng& rng, nn::Shape shape) {
  std::vector<double> v(nn::shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-1, 1);
  return nn::Tensor::from(std::move(shape), std::move(v));
}

std::vector<nn::Tensor> tensors_of(const nn::Module& m) {
  std::vector<nn::Tensor> out;
  for (const auto& p : m.parameters()) out.push_back(p.tensor);
  return out;
}

TokenVocabulary small_vocab() {
  std::vector<std::string> texts{"Is there forest or water in the image?", "Forest, Water, Urban area",
                                 "What classes are present in the image?"};
  return TokenVocabulary::build(texts);
}

}  // namespace

TEST_CASE("tokenize") {
  CHECK(tokenize("Is there Forest or water?") == std::vector<std::string>{"is", "there", "forest", "or", "water"});
  CHECK(tokenize("Forest, Urban area", true) == std::vector<std::string>{"forest", ",", "urban", "area"});
  CHECK(tokenize("Broad-leaved forest") == std::vector<std::string>{"broadleaved", "forest"});
  CHECK(tokenize("?!").empty());
}

TEST_CASE("token vocabulary") {
  auto v = small_vocab();
  CHECK(v.token(TokenVocabulary::kPad) == "[PAD]");
  CHECK(v.id("forest") > TokenVocabulary::kSep);
  CHECK(v.id("glacier") == TokenVocabulary::kUnk);
  CHECK(v.id(",") != TokenVocabulary::kUnk);
  CHECK(TokenVocabulary::from_json(v.to_json()) == v);
}

TEST_CASE("question encoder") {
  Rng rng(1);
  auto vocab = small_vocab();
  QuestionEncoder enc(vocab.size(), 8, 6, rng);
  const auto a = enc.encode("Is there forest in the image?", vocab);
  CHECK(a.size() == 6);
  CHECK(a == enc.encode("Is there forest in the image?", vocab));
  CHECK(a != enc.encode("Is there water in the image?", vocab));
  for (double v : enc.encode("zebra quokka", vocab)) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(enc.encode("", vocab), InvalidInput);
  CHECK_THROWS_AS(enc.encode("?!", vocab), InvalidInput);

  SUBCASE("padding does not leak into shorter rows") {
    std::vector<std::size_t> s1 = vocab.encode("forest"), s2 = vocab.encode("Is there forest or water in the image");
    const std::vector<std::size_t>* both[] = {&s1, &s2};
    nn::NoGradGuard guard;
    auto batch = enc(both).values();
    const std::vector<std::size_t>* one[] = {&s1};
    const std::vector<std::size_t>* two[] = {&s2};
    auto r1 = enc(one).values(), r2 = enc(two).values();
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(batch[i] == doctest::Approx(r1[i]).epsilon(1e-14));
      CHECK(batch[6 + i] == doctest::Approx(r2[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("e2e_fuse") {
  Rng rng(2);
  auto vi = random_tensor(rng, {3, 7});
  CHECK(e2e_fuse(vi, nn::Tensor::full({3, 7}, 1.0)).values() == vi.values());
  const auto absorbed = e2e_fuse(nn::Tensor::zeros({3, 7}), vi);
  for (double v : absorbed.values()) CHECK(v == 0.0);
  auto vq = random_tensor(rng, {3, 7});
  auto fa = e2e_fuse(vi, vq);
  for (std::size_t k = 0; k < 21; ++k) CHECK(fa.values()[k] == vi.values()[k] * vq.values()[k]);
  CHECK_THROWS_AS(e2e_fuse(vi, nn::Tensor::zeros({3, 6})), ConfigError);
}

TEST_CASE("argmax") {
  std::vector<double> tie{0.1, 0.7, 0.7, 0.2};
  CHECK(argmax(tie) == 1);
  CHECK_THROWS_AS(argmax(std::vector<double>{}), InvalidInput);
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(9);
    for (auto& v : s) v = rng.uniform(-3, 3);
    const double c = rng.uniform(0.01, 100.0);
    std::vector<double> scaled(s);
    for (auto& v : scaled) v *= c;
    CHECK(argmax(scaled) == argmax(s));
  }
}

TEST_CASE("answer vocabulary") {
  SUBCASE("yes/no only") {
    std::vector<corpus::QARecord> train{qa("yes", corpus::QuestionType::yes_no), qa("no", corpus::QuestionType::yes_no),
                                        qa("yes", corpus::QuestionType::yes_no)};
    auto v = AnswerVocabulary::build(train, 10);
    CHECK(v.answers() == std::vector<std::string>{"yes", "no", "None"});
    CHECK(v.count(2) == 0);
  }
  SUBCASE("cap keeps the most frequent, ties lexical") {
    std::vector<corpus::QARecord> train;
    std::map<std::string, std::size_t> counts;
    Rng rng(4);
    for (int a = 0; a < 50; ++a) {
      const auto name = "answer" + std::to_string(a);
      const std::size_t n = 1 + rng.index(6);
      counts[name] = n;
      for (std::size_t k = 0; k < n; ++k) train.push_back(qa(name));
    }
    for (const char* must : {"yes", "no", "None"}) {
      counts[must] = 100;
      for (int k = 0; k < 100; ++k) train.push_back(qa(must));
    }
    auto v = AnswerVocabulary::build(train, 10);
    // Counting oracle: sort (count desc, name asc) and keep the first ten.
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
      return x.second != y.second ? x.second > y.second : x.first < y.first;
    });
    REQUIRE(v.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
      CHECK(v.answer(i) == ranked[i].first);
      CHECK(v.count(i) == ranked[i].second);
    }
  }
  SUBCASE("required answers displace the tail") {
    std::vector<corpus::QARecord> train;
    for (int a = 0; a < 20; ++a)
      for (int k = 0; k < 5; ++k) train.push_back(qa("a" + std::to_string(a)));
    auto v = AnswerVocabulary::build(train, 5);
    CHECK(v.size() == 5);
    CHECK(v.index("yes"));
    CHECK(v.index("None"));
    CHECK(v.target("a19") == AnswerVocabulary::kOov);
  }
  CHECK_THROWS_AS(AnswerVocabulary::build({}, 10), InvalidInput);
  auto v = AnswerVocabulary::build(std::vector<corpus::QARecord>{qa("Forest")});
  CHECK(AnswerVocabulary::from_json(v.to_json()) == v);
}

TEST_CASE("build_context") {
  const auto tax = corpus::ClassTaxonomy::clc61();
  CHECK(build_context({}, tax).empty());
  const auto forests = *tax.find("Forests"), water = *tax.find("Water bodies");
  CHECK(build_context(std::vector<corpus::ClassId>{forests}, tax) == "Forests");
  const auto a = build_context(std::vector<corpus::ClassId>{forests, water}, tax);
  const auto b = build_context(std::vector<corpus::ClassId>{water, forests}, tax);
  CHECK(a == b);
  CHECK(a == "Water bodies, Forests");
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<corpus::ClassId> ids;
    for (std::size_t j = 0; j < tax.size(); ++j)
      if (rng.bernoulli(0.1)) ids.push_back(j);
    auto shuffled = ids;
    rng.shuffle(shuffled);
    CHECK(build_context(shuffled, tax) == build_context(ids, tax));
  }
  CHECK_THROWS_AS(build_context(std::vector<corpus::ClassId>{99}, tax), InvalidInput);
}

TEST_CASE("prompt tokens") {
  auto vocab = small_vocab();
  auto ids = prompt_tokens("Is there water?", "Forest, Water", vocab, 64);
  CHECK(ids.front() == TokenVocabulary::kCls);
  CHECK(ids[4] == TokenVocabulary::kSep);
  CHECK(ids.size() == 8);
  auto cut = prompt_tokens("Is there water?", "Forest, Water", vocab, 7);
  CHECK(cut.size() == 7);
  CHECK(std::vector<std::size_t>(cut.begin(), cut.begin() + 5) == std::vector<std::size_t>(ids.begin(), ids.begin() + 5));
  auto tiny = prompt_tokens("Is there water?", "Forest", vocab, 4);
  CHECK(tiny == std::vector<std::size_t>{TokenVocabulary::kCls, vocab.id("is"), vocab.id("there"), TokenVocabulary::kSep});
  CHECK(prompt_tokens("Is there water?", "", vocab, 64).size() == 5);
}

TEST_CASE("prompt model scores") {
  Rng rng(6);
  auto vocab = small_vocab();
  PromptConfig cfg{.width = 16, .heads = 4, .layers = 2, .ff_width = 32, .max_len = 32, .hidden_width = 12};
  PromptModel model(cfg, vocab.size(), 5, rng);
  VqaSample empty_context, a;
  empty_context.tokens = prompt_tokens("Is there water?", "", vocab, 32);
  a.tokens = prompt_tokens("Is there water?", "Forest, Water", vocab, 32);
  VqaSample b = a;
  const VqaSample* batch[] = {&empty_context, &a, &b};
  nn::NoGradGuard guard;
  auto scores = model.logits(batch, false, rng);
  CHECK(scores.shape() == nn::Shape{3, 5});
  for (double v : scores.values()) CHECK(std::isfinite(v));
  for (std::size_t j = 0; j < 5; ++j) CHECK(scores.values()[5 + j] == scores.values()[10 + j]);
}

TEST_CASE("pipeline gradients match finite differences") {
  Rng rng(7);
  auto vocab = small_vocab();
  std::vector<int> targets{0, 2, AnswerVocabulary::kOov, 1};

  SUBCASE("end-to-end") {
    EndToEndConfig cfg{.embed_width = 4, .question_width = 5, .joint_width = 6, .hidden_width = 5, .dropout = 0.0};
    EndToEndModel model(cfg, 3, vocab.size(), 4, rng);
    std::vector<VqaSample> samples(4);
    const char* questions[] = {"Is there forest?", "Is there water or forest in the image?", "What classes", "water"};
    for (std::size_t i = 0; i < 4; ++i) {
      samples[i].tokens = vocab.encode(questions[i]);
      samples[i].visual = {rng.uniform(), rng.uniform(), rng.uniform()};
      samples[i].target = targets[i];
    }
    std::vector<const VqaSample*> batch;
    for (const auto& s : samples) batch.push_back(&s);
    auto r = testing::gradient_check(
        [&] { return nn::cross_entropy(model.logits(batch, false, rng), targets); }, tensors_of(model), 1e-6, 1e-5, 24);
    CHECK_MESSAGE(r.worst_relative < 1e-4, r.worst_location);
  }
  SUBCASE("prompt") {
    PromptConfig cfg{.width = 8, .heads = 2, .layers = 2, .ff_width = 12, .max_len = 16, .hidden_width = 6, .dropout = 0.0};
    PromptModel model(cfg, vocab.size(), 4, rng);
    std::vector<VqaSample> samples(4);
    const char* contexts[] = {"", "Forest", "Forest, Water", "Urban area"};
    for (std::size_t i = 0; i < 4; ++i) {
      samples[i].tokens = prompt_tokens("Is there water or forest?", contexts[i], vocab, 16);
      samples[i].target = targets[i];
    }
    std::vector<const VqaSample*> batch;
    for (const auto& s : samples) batch.push_back(&s);
    auto r = testing::gradient_check(
        [&] { return nn::cross_entropy(model.logits(batch, false, rng), targets); }, tensors_of(model), 1e-6, 1e-5, 24);
    CHECK_MESSAGE(r.worst_relative < 1e-4, r.worst_location);
  }
}

TEST_CASE("training loop and predictions") {
  const auto tax = corpus::ClassTaxonomy::flat(4);
  std::vector<corpus::QARecord> records;
  std::map<std::string, std::string> contexts;
  Rng rng(8);
  for (int p = 0; p < 6; ++p) {
    corpus::PatchRecord patch;
    patch.patch_id = "p" + std::to_string(p);
    patch.labels = {static_cast<std::uint8_t>(p % 2), static_cast<std::uint8_t>(p % 3 == 0), 1, 0};
    auto q = corpus::generate_questions(patch, tax, 4, 1);
    records.insert(records.end(), q.begin(), q.end());
    std::vector<corpus::ClassId> ids;
    for (std::size_t j = 0; j < 4; ++j)
      if (patch.labels[j]) ids.push_back(j);
    contexts[patch.patch_id] = build_context(ids, tax);
  }
  auto answers = AnswerVocabulary::build(records, 4);
  std::vector<std::string> texts;
  for (const auto& r : records) texts.push_back(r.question);
  for (const auto& c : tax.classes()) texts.push_back(c.name);
  auto vocab = TokenVocabulary::build(texts);
  auto samples = make_prompt_samples(records, contexts, vocab, answers, 32);
  CHECK_THROWS_AS(make_prompt_samples(records, {}, vocab, answers, 32), DataError);

  PromptConfig cfg{.width = 16, .heads = 2, .layers = 1, .ff_width = 16, .max_len = 32, .hidden_width = 16};
  auto run = [&] {
    Rng init(9);
    PromptModel model(cfg, vocab.size(), answers.size(), init);
    VqaTrainOptions options;
    options.epochs = 4;
    options.batch_size = 8;
    options.learning_rate = 3e-3;
    options.seed = 2;
    auto log = train_vqa_model(model, samples, samples, options);
    return std::make_pair(log.to_json().dump(), predict(model, samples, answers));
  };
  auto [log_a, pred_a] = run();
  auto [log_b, pred_b] = run();
  CHECK(log_a == log_b);
  CHECK(pred_a == pred_b);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].target == AnswerVocabulary::kOov) CHECK_FALSE(pred_a[i].correct);
    CHECK(pred_a[i].correct == (pred_a[i].predicted == pred_a[i].gold && samples[i].target >= 0));
  }
}
