#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rsvqa/common/random.hpp"
#include "rsvqa/nn/ops.hpp"
#include "rsvqa/nn/tensor.hpp"

namespace rsvqa::nn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<NamedTensor>;

class Module {
 public:
  virtual ~Module() = default;
  virtual void collect(ParameterList& out, const std::string& prefix) const = 0;

  ParameterList parameters(const std::string& prefix = "") const {
    ParameterList out;
    collect(out, prefix);
    return out;
  }
  void set_trainable(bool trainable) const {
    for (auto& p : parameters()) p.tensor.set_requires_grad(trainable);
  }
  std::size_t parameter_count(bool trainable_only = false) const;
};

/// y = x W + b with W stored [in, out]. Uniform fan-in initialization.
class Linear : public Module {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);

  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(ParameterList& out, const std::string& prefix) const override;

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor weight;
  Tensor bias;
};

/// Square-kernel convolution with He-normal initialization.
class Conv2d : public Module {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t padding,
         Rng& rng);

  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride_, padding_); }
  void collect(ParameterList& out, const std::string& prefix) const override;

  Tensor weight;
  Tensor bias;

 private:
  std::size_t stride_ = 1;
  std::size_t padding_ = 0;
};

/// conv3x3 -> relu -> conv3x3, plus identity or 1x1-projection shortcut, then
/// relu. The second convolution starts at zero so the block is initially the
/// shortcut.
class ResidualBlock : public Module {
 public:
  ResidualBlock() = default;
  ResidualBlock(std::size_t in, std::size_t out, std::size_t stride, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  void collect(ParameterList& out, const std::string& prefix) const override;

 private:
  Conv2d conv1_;
  Conv2d conv2_;
  Conv2d shortcut_;
  bool project_ = false;
};

class Embedding : public Module {
 public:
  Embedding() = default;
  Embedding(std::size_t vocab, std::size_t width, Rng& rng, double stddev = 0.1);

  Tensor operator()(std::span<const std::size_t> ids) const { return embedding(table, ids); }
  void collect(ParameterList& out, const std::string& prefix) const override;

  Tensor table;
};

class LayerNorm : public Module {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t width);

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
  void collect(ParameterList& out, const std::string& prefix) const override;

  Tensor gamma;
  Tensor beta;
};

/// Gated recurrent unit:
///   r = s(x Wr + h Ur), z = s(x Wz + h Uz), n = tanh(x Wn + r * (h Un)),
///   h' = (1 - z) * n + z * h.
class GruCell : public Module {
 public:
  GruCell() = default;
  GruCell(std::size_t input, std::size_t hidden, Rng& rng);

  Tensor operator()(const Tensor& x, const Tensor& h) const;
  void collect(ParameterList& out, const std::string& prefix) const override;
  std::size_t hidden_size() const { return hidden_; }

 private:
  Linear input_;   // [input, 3*hidden] gates r|z|n
  Linear hidden_proj_;
  std::size_t hidden_ = 0;
};

/// Multi-head self-attention over one sequence x[L, d].
class SelfAttention : public Module {
 public:
  SelfAttention() = default;
  SelfAttention(std::size_t width, std::size_t heads, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  void collect(ParameterList& out, const std::string& prefix) const override;

 private:
  Linear qkv_;
  Linear out_;
  std::size_t heads_ = 1;
  std::size_t width_ = 0;
};

/// Post-norm encoder layer: x = LN(x + MHA(x)); x = LN(x + FFN(x)).
class TransformerEncoderLayer : public Module {
 public:
  TransformerEncoderLayer() = default;
  TransformerEncoderLayer(std::size_t width, std::size_t heads, std::size_t ff_width, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  void collect(ParameterList& out, const std::string& prefix) const override;

 private:
  SelfAttention attention_;
  LayerNorm norm1_;
  Linear ff1_;
  Linear ff2_;
  LayerNorm norm2_;
};

/// Prefix join for parameter names ("encoder" + "stem.weight").
std::string join_name(const std::string& prefix, const std::string& name);

}  // namespace rsvqa::nn
