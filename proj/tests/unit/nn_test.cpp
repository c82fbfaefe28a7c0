#include <cmath>

#include "doctest.h"
#include "rsvqa/common/errors.hpp"
#include "rsvqa/nn/checkpoint.hpp"
#include "rsvqa/nn/layers.hpp"
#include "rsvqa/nn/optim.hpp"
#include "support/gradcheck.hpp"

using namespace rsvqa;
using namespace rsvqa::nn;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Weighted sum so that every output element gets a distinct upstream gradient.
Tensor probe(const Tensor& y, const Tensor& weights) { return sum(mul(y, weights)); }

}  // namespace

TEST_CASE("elementwise and dense ops match finite differences") {
  Rng rng(7);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 5}, rng);
  auto c = random_tensor({3, 4}, rng);
  auto w = random_tensor({3, 5}, rng, false);
  auto bias = random_tensor({5}, rng);
  auto w34 = random_tensor({3, 4}, rng, false);

  CHECK(testing::gradient_check([&] { return probe(matmul(a, b), w); }, {a, b}).worst_relative < 1e-6);
  CHECK(testing::gradient_check([&] { return probe(linear(a, b, bias), w); }, {a, b, bias}).worst_relative < 1e-6);
  auto bt = random_tensor({5, 4}, rng);
  CHECK(testing::gradient_check([&] { return probe(matmul_bt(a, bt), w); }, {a, bt}).worst_relative < 1e-6);
  CHECK(testing::gradient_check([&] { return probe(mul(tanh(a), sigmoid(c)), w34); }, {a, c}).worst_relative < 1e-6);
  CHECK(testing::gradient_check([&] { return probe(sub(one_minus(a), scale(c, 0.3)), w34); }, {a, c}).worst_relative <
        1e-6);
  CHECK(testing::gradient_check([&] { return probe(softmax_rows(a), w34); }, {a}).worst_relative < 1e-6);
  auto gamma = random_tensor({4}, rng);
  auto beta = random_tensor({4}, rng);
  CHECK(testing::gradient_check([&] { return probe(layer_norm(a, gamma, beta), w34); }, {a, gamma, beta})
            .worst_relative < 1e-5);
}

TEST_CASE("structural ops route gradients to the right elements") {
  Rng rng(11);
  auto a = random_tensor({2, 3}, rng);
  auto b = random_tensor({2, 2}, rng);
  auto w = random_tensor({2, 5}, rng, false);
  CHECK(testing::gradient_check([&] { return probe(concat_cols({a, b}), w); }, {a, b}).worst_relative < 1e-7);
  auto w2 = random_tensor({2, 2}, rng, false);
  CHECK(testing::gradient_check([&] { return probe(slice_cols(a, 1, 2), w2); }, {a}).worst_relative < 1e-7);
  auto w43 = random_tensor({4, 3}, rng, false);
  auto c = random_tensor({2, 3}, rng);
  CHECK(testing::gradient_check([&] { return probe(concat_rows({a, c}), w43); }, {a, c}).worst_relative < 1e-7);
  auto table = random_tensor({6, 3}, rng);
  std::vector<std::size_t> ids{4, 1, 4, 0};
  CHECK(testing::gradient_check([&] { return probe(embedding(table, ids), w43); }, {table}).worst_relative < 1e-7);
}

TEST_CASE("conv2d and pooling gradients") {
  Rng rng(3);
  auto x = random_tensor({2, 3, 5, 5}, rng);
  auto k = random_tensor({4, 3, 3, 3}, rng);
  auto b = random_tensor({4}, rng);
  for (std::size_t stride : {1u, 2u}) {
    const std::size_t out = (5 + 2 - 3) / stride + 1;
    auto w = random_tensor({2, 4, out, out}, rng, false);
    auto r = testing::gradient_check([&] { return probe(conv2d(x, k, b, stride, 1), w); }, {x, k, b});
    CHECK_MESSAGE(r.worst_relative < 1e-6, r.worst_location);
  }
  auto w = random_tensor({2, 3}, rng, false);
  CHECK(testing::gradient_check([&] { return probe(global_avg_pool(x), w); }, {x}).worst_relative < 1e-7);
}

TEST_CASE("conv2d agrees with a direct loop convolution") {
  Rng rng(5);
  auto x = random_tensor({1, 2, 4, 4}, rng, false);
  auto k = random_tensor({3, 2, 3, 3}, rng, false);
  auto b = random_tensor({3}, rng, false);
  auto y = conv2d(x, k, b, 1, 1);
  for (std::size_t o = 0; o < 3; ++o) {
    for (long oy = 0; oy < 4; ++oy) {
      for (long ox = 0; ox < 4; ++ox) {
        double acc = b.values()[o];
        for (std::size_t c = 0; c < 2; ++c) {
          for (long ky = 0; ky < 3; ++ky) {
            for (long kx = 0; kx < 3; ++kx) {
              const long iy = oy + ky - 1, ix = ox + kx - 1;
              if (iy < 0 || ix < 0 || iy >= 4 || ix >= 4) continue;
              acc += x.values()[(c * 4 + iy) * 4 + ix] * k.values()[((o * 2 + c) * 3 + ky) * 3 + kx];
            }
          }
        }
        CHECK(y.values()[(o * 4 + oy) * 4 + ox] == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("losses match finite differences and closed forms") {
  Rng rng(13);
  auto z = random_tensor({4, 3}, rng);
  std::vector<double> targets{1, 0, 1, 0, 0, 1, 1, 1, 0, 0, 1, 0};
  CHECK(testing::gradient_check([&] { return bce_with_logits(z, targets); }, {z}).worst_relative < 1e-6);
  std::vector<int> labels{2, -1, 0, 1};
  CHECK(testing::gradient_check([&] { return cross_entropy(z, labels); }, {z}).worst_relative < 1e-6);

  auto zero = Tensor::zeros({1, 2});
  CHECK(bce_with_logits(zero, std::vector<double>{1, 0}).item() == doctest::Approx(std::log(2.0)));
  CHECK(cross_entropy(zero, std::vector<int>{1}).item() == doctest::Approx(std::log(2.0)));
  CHECK(cross_entropy(zero, std::vector<int>{-1}).item() == 0.0);
}

TEST_CASE("recurrent and attention layers match finite differences") {
  Rng rng(17);
  GruCell cell(3, 4, rng);
  auto x = random_tensor({2, 3}, rng);
  auto h = random_tensor({2, 4}, rng);
  auto w = random_tensor({2, 4}, rng, false);
  std::vector<Tensor> inputs{x, h};
  for (auto& p : cell.parameters()) inputs.push_back(p.tensor);
  auto r = testing::gradient_check([&] { return probe(cell(x, cell(x, h)), w); }, inputs);
  CHECK_MESSAGE(r.worst_relative < 1e-5, r.worst_location);

  TransformerEncoderLayer layer(8, 2, 16, rng);
  auto seq = random_tensor({5, 8}, rng);
  auto ws = random_tensor({5, 8}, rng, false);
  std::vector<Tensor> lin{seq};
  for (auto& p : layer.parameters()) lin.push_back(p.tensor);
  auto r2 = testing::gradient_check([&] { return probe(layer(seq), ws); }, lin, 1e-6, 1e-5, 16);
  CHECK_MESSAGE(r2.worst_relative < 1e-4, r2.worst_location);
}

TEST_CASE("no-grad mode builds no graph") {
  auto a = Tensor::full({2, 2}, 1.0, true);
  NoGradGuard guard;
  auto y = relu(add(a, a));
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("shape errors are reported") {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(matmul(a, b), InvalidInput);
  CHECK_THROWS_AS(add(a, Tensor::zeros({3, 2})), InvalidInput);
  CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 6, 4, 4}), Tensor::zeros({2, 3, 3, 3}), Tensor::zeros({2}), 1, 1),
                  InvalidInput);
}

TEST_CASE("adam skips frozen parameters and reduces a quadratic") {
  Rng rng(1);
  Linear trained(2, 1, rng);
  Linear frozen(2, 1, rng);
  frozen.set_trainable(false);
  const auto frozen_before = frozen.weight.values();
  ParameterList params = trained.parameters("t");
  for (auto& p : frozen.parameters("f")) params.push_back(p);
  Adam adam(params, {.learning_rate = 0.05});
  auto x = Tensor::from({1, 2}, {1.0, -2.0});
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 200; ++i) {
    adam.zero_grad();
    auto y = add(trained(x), frozen(x));
    auto loss = mul(sub(y, Tensor::from({1, 1}, {3.0})), sub(y, Tensor::from({1, 1}, {3.0})));
    if (i == 0) first = loss.item();
    last = loss.item();
    sum(loss).backward();
    adam.step();
  }
  CHECK(last < 1e-4 * first);
  CHECK(frozen.weight.values() == frozen_before);
}

TEST_CASE("checkpoint round trip and shape validation") {
  Rng rng(2);
  Linear a(3, 2, rng);
  Linear b(3, 2, rng);
  const auto path = std::filesystem::temp_directory_path() / "rsvqa_nn_ck.bin";
  save_checkpoint(path, Checkpoint::capture({{"kind", "test"}}, a.parameters("head")));
  auto ck = load_checkpoint(path);
  CHECK(ck.header["kind"] == "test");
  ck.restore(b.parameters("head"));
  CHECK(a.weight.values() == b.weight.values());
  CHECK(a.bias.values() == b.bias.values());

  Linear wrong(4, 2, rng);
  CHECK_THROWS_AS(ck.restore(wrong.parameters("head")), DataError);
  CHECK_THROWS_AS(ck.restore(a.parameters("other")), DataError);
  std::filesystem::remove(path);
}
