#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rsvqa/common/random.hpp"
#include "rsvqa/nn/tensor.hpp"

namespace rsvqa::nn {

// Dense products. Matrices are row-major 2-D tensors.
Tensor matmul(const Tensor& a, const Tensor& b);      // [M,K]x[K,N]
Tensor matmul_bt(const Tensor& a, const Tensor& b);   // [M,K]x[N,K]^T
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);  // x[B,I] w[I,O] b[O]

// Elementwise, equal shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor one_minus(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Inverted dropout; identity when `training` is false or p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor reshape(const Tensor& x, Shape shape);

/// Gathers rows of `table` [V,D] -> [ids.size(), D].
Tensor embedding(const Tensor& table, std::span<const std::size_t> ids);

/// x[B,C,H,W], w[O,C,K,K], b[O] -> [B,O,Ho,Wo].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);
Tensor global_avg_pool(const Tensor& x);  // [B,C,H,W] -> [B,C]

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Mean binary cross-entropy over every element, evaluated on logits.
Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets);
/// Mean softmax cross-entropy over rows whose target is not `ignore_index`.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int ignore_index = -1);

}  // namespace rsvqa::nn
