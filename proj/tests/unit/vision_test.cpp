#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "rsvqa/common/errors.hpp"
#include "rsvqa/corpus/scene.hpp"
#include "rsvqa/nn/optim.hpp"
#include "rsvqa/vision/train.hpp"
#include "support/gradcheck.hpp"

using namespace rsvqa;
using namespace rsvqa::vision;

namespace {

nn::Tensor random_tensor(Rng& rng, nn::Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(nn::shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return nn::Tensor::from(std::move(shape), std::move(v));
}

EncoderConfig tiny_encoder(std::size_t channels = 3) {
  EncoderConfig c;
  c.in_channels = channels;
  c.widths = {4, 6};
  c.d_feat = 5;
  return c;
}

VisualModelConfig model_config(FusionKind kind, std::size_t n_classes) {
  VisualModelConfig c;
  c.kind = kind;
  c.encoder = tiny_encoder(kind == FusionKind::early ? 6 : 3);
  c.n_classes = n_classes;
  return c;
}

std::vector<corpus::PatchRecord> tiny_corpus(std::size_t n, std::size_t classes = 4) {
  return corpus::synthesize_corpus(corpus::SceneConfig::uniform(classes, 0.4, 8), n, 5);
}

std::vector<const corpus::PatchRecord*> ptrs(const std::vector<corpus::PatchRecord>& v) {
  std::vector<const corpus::PatchRecord*> out;
  for (const auto& p : v) out.push_back(&p);
  return out;
}

std::vector<std::vector<double>> snapshot(const nn::ParameterList& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params) out.push_back(p.tensor.values());
  return out;
}

}  // namespace

TEST_CASE("encoder contracts") {
  Rng rng(1);
  Encoder enc(tiny_encoder(), rng);
  Image zero(3, 8, 8);
  auto f = enc.encode(zero);
  CHECK(f.size() == 5);
  for (double v : f) CHECK(std::isfinite(v));

  Image img(3, 8, 8);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform());
  CHECK(enc.encode(img) == enc.encode(img));
  CHECK_THROWS_AS(enc.encode(Image(6, 8, 8)), InvalidInput);

  auto bad = tiny_encoder();
  bad.in_channels = 4;
  CHECK_THROWS_AS(Encoder(bad, rng), ConfigError);
}

TEST_CASE("classify") {
  Rng rng(2);
  nn::Linear head(5, 7, rng);
  std::ranges::fill(head.bias.data(), 0.0);
  auto s = classify(head, nn::Tensor::zeros({1, 5}));
  for (double v : s.values()) CHECK(v == 0.5);
  auto scores = classify(head, random_tensor(rng, {6, 5}, -5, 5));
  for (double v : scores.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK_THROWS_AS(classify(head, nn::Tensor::zeros({1, 4})), InvalidInput);
}

TEST_CASE("head gradients match finite differences") {
  Rng rng(3);
  const std::size_t n = 6, d = 5;
  std::vector<double> targets(3 * n);
  for (auto& t : targets) t = rng.bernoulli(0.5);

  nn::Linear head(d, n, rng);
  auto f = random_tensor(rng, {3, d});
  auto r = testing::gradient_check([&] { return nn::bce_with_logits(head(f), targets); }, {head.weight, head.bias});
  CHECK_MESSAGE(r.worst_relative < 1e-4, r.worst_location);

  HalfwayHead halfway(d, n, rng);
  auto fo = random_tensor(rng, {3, d}), fs = random_tensor(rng, {3, d});
  r = testing::gradient_check([&] { return nn::bce_with_logits(halfway.logits(fo, fs), targets); },
                              {halfway.layer.weight, halfway.layer.bias});
  CHECK_MESSAGE(r.worst_relative < 1e-4, r.worst_location);

  LateHead late(n, rng);
  auto so = random_tensor(rng, {3, n}, 0.01, 0.99), ss = random_tensor(rng, {3, n}, 0.01, 0.99);
  std::vector<nn::Tensor> late_params;
  for (auto& p : late.parameters()) late_params.push_back(p.tensor);
  r = testing::gradient_check([&] { return nn::bce_with_logits(late.logits(so, ss), targets); }, late_params);
  CHECK_MESSAGE(r.worst_relative < 1e-4, r.worst_location);

  // Whole early-fusion classifier, encoder included.
  auto patches = tiny_corpus(3, n);
  VisualModel early(model_config(FusionKind::early, n), rng);
  auto batch = ptrs(patches);
  std::vector<double> gold;
  for (const auto& p : patches) gold.insert(gold.end(), p.labels.begin(), p.labels.end());
  // Zero-initialized residual branches put ReLU inputs exactly on the kink;
  // jitter every parameter so the check runs at a differentiable point.
  std::vector<nn::Tensor> params;
  for (auto& p : early.parameters()) {
    for (auto& v : p.tensor.data()) v += rng.uniform(-0.1, 0.1);
    params.push_back(p.tensor);
  }
  r = testing::gradient_check([&] { return nn::bce_with_logits(early.logits(batch), gold); }, params, 1e-6, 1e-6, 16);
  CHECK_MESSAGE(r.worst_relative < 1e-4, r.worst_location);
}

TEST_CASE("fuse_early") {
  Image opt(3, 4, 5), sar(3, 4, 5);
  for (std::size_t i = 0; i < opt.data.size(); ++i) {
    opt.data[i] = static_cast<float>(i) * 0.01f;
    sar.data[i] = 1.0f - static_cast<float>(i) * 0.01f;
  }
  auto fused = fuse_early(opt, sar);
  CHECK(fused.channels == 6);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(fused.channel(c) == opt.channel(c));
    CHECK(fused.channel(c + 3) == sar.channel(c));
  }
  CHECK_THROWS_AS(fuse_early(opt, Image(3, 5, 5)), InvalidInput);
}

TEST_CASE("halfway head shape and parameter count") {
  Rng rng(4);
  HalfwayHead head(2048, 61, rng);
  CHECK(head.parameter_count(true) == (2 * 2048 + 1) * 61);
  CHECK(head.parameter_count(true) == 249917);
  HalfwayHead small(4, 3, rng);
  std::ranges::fill(small.layer.weight.data(), 0.0);
  std::ranges::fill(small.layer.bias.data(), 0.0);
  const auto half = fuse_halfway(small, nn::Tensor::zeros({2, 4}), nn::Tensor::zeros({2, 4}));
  for (double v : half.values()) CHECK(v == 0.5);
  CHECK_THROWS_AS(small.logits(nn::Tensor::zeros({1, 4}), nn::Tensor::zeros({1, 3})), InvalidInput);
}

TEST_CASE("late head") {
  Rng rng(5);
  LateHead head(61, rng);
  CHECK(head.input_size() == 122);
  CHECK(head.layer1.out_features() == 92);
  auto out = fuse_late(head, random_tensor(rng, {2, 61}, 0, 1), random_tensor(rng, {2, 61}, 0, 1));
  CHECK(out.shape() == nn::Shape{2, 61});
  CHECK_THROWS_AS(head.logits(nn::Tensor::zeros({1, 121})), InvalidInput);
  // Smallest of the three fusion heads at the same class count.
  CHECK(head.parameter_count(true) < HalfwayHead(2048, 61, rng).parameter_count(true));

  SUBCASE("pass-through is learnable on a copy task") {
    const std::size_t n = 8, samples = 256;
    LateHead copy(n, rng);
    // Identity start: layer k maps unit i to unit i, everything else zero.
    for (auto* layer : {&copy.layer1, &copy.layer2, &copy.layer3}) {
      std::ranges::fill(layer->weight.data(), 0.0);
      std::ranges::fill(layer->bias.data(), 0.0);
      for (std::size_t i = 0; i < n; ++i) layer->weight.data()[i * layer->out_features() + i] = 1.0;
    }
    std::vector<double> s(samples * n), targets(samples * n);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = rng.uniform(0.02, 0.98);
      targets[i] = s[i] >= 0.5 ? 1.0 : 0.0;
    }
    auto input = nn::Tensor::from({samples, n}, s);
    nn::Adam adam(copy.parameters(), {.learning_rate = 2e-2});
    for (int step = 0; step < 1500; ++step) {
      adam.zero_grad();
      auto loss = nn::bce_with_logits(copy.logits(input, input), targets);
      loss.backward();
      adam.step();
    }
    nn::NoGradGuard guard;
    auto pred = fuse_late(copy, input, input);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) agree += (pred.values()[i] >= 0.5) == (targets[i] == 1.0);
    CHECK(static_cast<double>(agree) / static_cast<double>(targets.size()) >= 0.99);
  }
}

TEST_CASE("threshold_classes") {
  std::vector<double> half(5, 0.5);
  CHECK(threshold_classes(half, 0.5).size() == 5);
  CHECK(threshold_classes(half, 0.5 + 1e-12).empty());
  CHECK_THROWS_AS(threshold_classes(half, 0.0), InvalidInput);
  CHECK_THROWS_AS(threshold_classes(half, 1.0), InvalidInput);
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> scores(12);
    for (auto& s : scores) s = rng.uniform();
    double t1 = rng.uniform(0.001, 0.999), t2 = rng.uniform(0.001, 0.999);
    if (t1 > t2) std::swap(t1, t2);
    auto loose = threshold_classes(scores, t1), strict = threshold_classes(scores, t2);
    CHECK(std::includes(loose.begin(), loose.end(), strict.begin(), strict.end()));
  }
}

TEST_CASE("visual model shapes for every fusion kind") {
  Rng rng(7);
  auto patches = tiny_corpus(3);
  auto batch = ptrs(patches);
  for (auto kind : {FusionKind::optical_only, FusionKind::sar_only, FusionKind::early, FusionKind::halfway,
                    FusionKind::late}) {
    VisualModel model(model_config(kind, 4), rng);
    CHECK(model.logits(batch).shape() == nn::Shape{3, 4});
    if (kind == FusionKind::late) {
      CHECK_THROWS_AS(model.features(batch), ConfigError);
      CHECK(model.head_input(batch).dim(1) == 8);
    } else {
      CHECK(model.features(batch).shape() == nn::Shape{3, model.feature_size()});
    }
    if (kind == FusionKind::early) CHECK(model.head_input(batch).dim(1) == 6);
  }
  auto wrong = model_config(FusionKind::early, 4);
  wrong.encoder.in_channels = 3;
  CHECK_THROWS_AS(VisualModel(wrong, rng), ConfigError);
}

TEST_CASE("staged initialization and freezing") {
  Rng rng(8);
  auto patches = tiny_corpus(24);
  VisualModel optical(model_config(FusionKind::optical_only, 4), rng);
  VisualModel sar(model_config(FusionKind::sar_only, 4), rng);
  TrainOptions opts{.epochs = 2, .batch_size = 8, .learning_rate = 1e-2, .seed = 1};
  train_visual_model(optical, patches, {}, opts);
  train_visual_model(sar, patches, {}, opts);

  SUBCASE("early fusion stem") {
    VisualModel early(model_config(FusionKind::early, 4), rng);
    early.initialize_from(optical, sar);
    const auto& w = early.primary_encoder().stem().weight;
    const auto& wo = optical.primary_encoder().stem().weight;
    const auto& ws = sar.primary_encoder().stem().weight;
    for (std::size_t o = 0; o < w.dim(0); ++o) {
      for (std::size_t c = 0; c < 6; ++c) {
        for (std::size_t k = 0; k < 9; ++k) {
          const auto& src = c < 3 ? wo : ws;
          CHECK(w.values()[(o * 6 + c) * 9 + k] == src.values()[(o * 3 + c % 3) * 9 + k]);
        }
      }
    }
    CHECK(early.config().encoder.pretrained_source == PretrainedSource::classification_task);
    CHECK_THROWS_AS(early.initialize_from(sar, optical), StagingError);
  }

  for (auto kind : {FusionKind::halfway, FusionKind::late}) {
    CAPTURE(to_string(kind));
    VisualModel fusion(model_config(kind, 4), rng);
    fusion.initialize_from(optical, sar);
    nn::ParameterList frozen;
    for (const auto& p : fusion.parameters()) {
      if (!p.tensor.requires_grad()) frozen.push_back(p);
    }
    REQUIRE_FALSE(frozen.empty());
    const auto before = snapshot(frozen);
    const auto all_before = snapshot(fusion.parameters());
    train_visual_model(fusion, patches, patches, opts);
    CHECK(snapshot(frozen) == before);
    CHECK(snapshot(fusion.parameters()) != all_before);
    // Frozen parts carry the single-modality weights.
    CHECK(fusion.primary_encoder().parameters()[0].tensor.values() ==
          optical.primary_encoder().parameters()[0].tensor.values());
    CHECK(fusion.sar_encoder().parameters()[0].tensor.values() ==
          sar.primary_encoder().parameters()[0].tensor.values());
  }
  VisualModel late(model_config(FusionKind::late, 4), rng);
  CHECK(late.parameter_count(true) == late.late_head().parameter_count());
}

TEST_CASE("training is deterministic and reduces the loss") {
  auto patches = tiny_corpus(32);
  auto train_once = [&] {
    Rng rng(9);
    VisualModel m(model_config(FusionKind::optical_only, 4), rng);
    auto log = train_visual_model(m, patches, patches, {.epochs = 5, .batch_size = 8, .learning_rate = 5e-3, .seed = 3});
    return std::make_pair(snapshot(m.parameters()), log);
  };
  auto [a, log_a] = train_once();
  auto [b, log_b] = train_once();
  CHECK(a == b);
  CHECK(log_a.to_json() == log_b.to_json());
  CHECK(log_a.epochs.back().train_loss < log_a.epochs.front().train_loss);
  CHECK(log_a.epochs.back().val_metric.has_value());
}

TEST_CASE("early stopping restores the best epoch") {
  auto patches = tiny_corpus(16);
  Rng rng(10);
  VisualModel m(model_config(FusionKind::sar_only, 4), rng);
  auto val = tiny_corpus(8);
  auto log = train_visual_model(m, patches, val, {.epochs = 40, .batch_size = 4, .learning_rate = 5e-2, .seed = 2, .patience = 2});
  REQUIRE(log.best_epoch >= 1);
  double best = 1e9;
  for (const auto& e : log.epochs) best = std::min(best, *e.val_loss);
  CHECK(*log.epochs[log.best_epoch - 1].val_loss == best);
}

TEST_CASE("visual model checkpoint round trip") {
  Rng rng(11);
  auto patches = tiny_corpus(4);
  auto path = std::filesystem::temp_directory_path() / "rsvqa_visual.ck";
  for (auto kind : {FusionKind::optical_only, FusionKind::late}) {
    VisualModel m(model_config(kind, 4), rng);
    save_visual_model(path, m);
    auto back = load_visual_model(path);
    CHECK(back.kind() == kind);
    CHECK(predict_scores(back, patches) == predict_scores(m, patches));
    for (const auto& p : back.parameters()) {
      if (kind == FusionKind::late && p.name.rfind("fusion", 0) != 0) CHECK_FALSE(p.tensor.requires_grad());
    }
  }
  std::filesystem::remove(path);
}
