#include "rsvqa/nn/layers.hpp"

#include <cmath>

#include "rsvqa/common/errors.hpp"

namespace rsvqa::nn {

std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

std::size_t Module::parameter_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& p : parameters()) {
    if (!trainable_only || p.tensor.requires_grad()) n += p.tensor.numel();
  }
  return n;
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(in * out), b(out);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  for (auto& v : b) v = rng.uniform(-bound, bound);
  weight = Tensor::from({in, out}, std::move(w), true);
  bias = Tensor::from({out}, std::move(b), true);
}

void Linear::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({join_name(prefix, "weight"), weight});
  out.push_back({join_name(prefix, "bias"), bias});
}

Conv2d::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t padding,
               Rng& rng)
    : stride_(stride), padding_(padding) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(in * kernel * kernel));
  std::vector<double> w(out * in * kernel * kernel);
  for (auto& v : w) v = rng.normal(0.0, stddev);
  weight = Tensor::from({out, in, kernel, kernel}, std::move(w), true);
  bias = Tensor::zeros({out}, true);
}

void Conv2d::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({join_name(prefix, "weight"), weight});
  out.push_back({join_name(prefix, "bias"), bias});
}

ResidualBlock::ResidualBlock(std::size_t in, std::size_t out, std::size_t stride, Rng& rng)
    : conv1_(in, out, 3, stride, 1, rng), conv2_(out, out, 3, 1, 1, rng), project_(in != out || stride != 1) {
  std::fill(conv2_.weight.data().begin(), conv2_.weight.data().end(), 0.0);
  if (project_) shortcut_ = Conv2d(in, out, 1, stride, 0, rng);
}

Tensor ResidualBlock::operator()(const Tensor& x) const {
  Tensor branch = conv2_(relu(conv1_(x)));
  Tensor skip = project_ ? shortcut_(x) : x;
  return relu(add(branch, skip));
}

void ResidualBlock::collect(ParameterList& out, const std::string& prefix) const {
  conv1_.collect(out, join_name(prefix, "conv1"));
  conv2_.collect(out, join_name(prefix, "conv2"));
  if (project_) shortcut_.collect(out, join_name(prefix, "shortcut"));
}

Embedding::Embedding(std::size_t vocab, std::size_t width, Rng& rng, double stddev) {
  std::vector<double> t(vocab * width);
  for (auto& v : t) v = rng.normal(0.0, stddev);
  table = Tensor::from({vocab, width}, std::move(t), true);
}

void Embedding::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({join_name(prefix, "table"), table});
}

LayerNorm::LayerNorm(std::size_t width)
    : gamma(Tensor::full({width}, 1.0, true)), beta(Tensor::zeros({width}, true)) {}

void LayerNorm::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({join_name(prefix, "gamma"), gamma});
  out.push_back({join_name(prefix, "beta"), beta});
}

GruCell::GruCell(std::size_t input, std::size_t hidden, Rng& rng)
    : input_(input, 3 * hidden, rng), hidden_proj_(hidden, 3 * hidden, rng), hidden_(hidden) {}

Tensor GruCell::operator()(const Tensor& x, const Tensor& h) const {
  Tensor gx = input_(x);
  Tensor gh = hidden_proj_(h);
  Tensor r = sigmoid(add(slice_cols(gx, 0, hidden_), slice_cols(gh, 0, hidden_)));
  Tensor z = sigmoid(add(slice_cols(gx, hidden_, hidden_), slice_cols(gh, hidden_, hidden_)));
  Tensor n = tanh(add(slice_cols(gx, 2 * hidden_, hidden_), mul(r, slice_cols(gh, 2 * hidden_, hidden_))));
  return add(mul(one_minus(z), n), mul(z, h));
}

void GruCell::collect(ParameterList& out, const std::string& prefix) const {
  input_.collect(out, join_name(prefix, "input"));
  hidden_proj_.collect(out, join_name(prefix, "hidden"));
}

SelfAttention::SelfAttention(std::size_t width, std::size_t heads, Rng& rng)
    : qkv_(width, 3 * width, rng), out_(width, width, rng), heads_(heads), width_(width) {
  if (heads == 0 || width % heads != 0) throw ConfigError("attention width must be divisible by head count");
}

Tensor SelfAttention::operator()(const Tensor& x) const {
  const std::size_t head_dim = width_ / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Tensor qkv = qkv_(x);
  std::vector<Tensor> heads;
  heads.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    Tensor q = slice_cols(qkv, h * head_dim, head_dim);
    Tensor k = slice_cols(qkv, width_ + h * head_dim, head_dim);
    Tensor v = slice_cols(qkv, 2 * width_ + h * head_dim, head_dim);
    Tensor weights = softmax_rows(scale(matmul_bt(q, k), inv_sqrt));
    heads.push_back(matmul(weights, v));
  }
  return out_(heads.size() == 1 ? heads[0] : concat_cols(heads));
}

void SelfAttention::collect(ParameterList& out, const std::string& prefix) const {
  qkv_.collect(out, join_name(prefix, "qkv"));
  out_.collect(out, join_name(prefix, "out"));
}

TransformerEncoderLayer::TransformerEncoderLayer(std::size_t width, std::size_t heads, std::size_t ff_width,
                                                 Rng& rng)
    : attention_(width, heads, rng), norm1_(width), ff1_(width, ff_width, rng), ff2_(ff_width, width, rng),
      norm2_(width) {}

Tensor TransformerEncoderLayer::operator()(const Tensor& x) const {
  Tensor h = norm1_(add(x, attention_(x)));
  return norm2_(add(h, ff2_(relu(ff1_(h)))));
}

void TransformerEncoderLayer::collect(ParameterList& out, const std::string& prefix) const {
  attention_.collect(out, join_name(prefix, "attention"));
  norm1_.collect(out, join_name(prefix, "norm1"));
  ff1_.collect(out, join_name(prefix, "ff1"));
  ff2_.collect(out, join_name(prefix, "ff2"));
  norm2_.collect(out, join_name(prefix, "norm2"));
}

}  // namespace rsvqa::nn
