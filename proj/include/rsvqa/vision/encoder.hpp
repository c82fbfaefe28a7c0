#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "rsvqa/common/image.hpp"
#include "rsvqa/nn/layers.hpp"

namespace rsvqa::vision {

enum class PretrainedSource { none, classification_task };

std::string to_string(PretrainedSource s);
PretrainedSource pretrained_source_from_string(const std::string& text);

/// Residual CNN: a 3x3 stem, one residual block per entry of `widths` (stride 1
/// for the first, 2 afterwards), global average pooling, and a linear
/// projection when d_feat differs from the last width.
struct EncoderConfig {
  std::size_t in_channels = 3;
  std::vector<std::size_t> widths{8, 16, 32};
  std::size_t d_feat = 32;
  PretrainedSource pretrained_source = PretrainedSource::none;
  bool frozen = false;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

nlohmann::json to_json(const EncoderConfig& c);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

/// Stacks images into a [B,C,H,W] tensor. All images must share a shape.
nn::Tensor stack_images(std::span<const Image* const> images);

class Encoder : public nn::Module {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& config, Rng& rng);

  /// x[B,C,H,W] -> f_i[B,d_feat].
  nn::Tensor operator()(const nn::Tensor& x) const;
  /// Single image, no graph.
  std::vector<double> encode(const Image& image) const;

  const EncoderConfig& config() const { return config_; }
  nn::Conv2d& stem() { return stem_; }
  const nn::Conv2d& stem() const { return stem_; }
  void collect(nn::ParameterList& out, const std::string& prefix) const override;

 private:
  EncoderConfig config_;
  nn::Conv2d stem_;
  std::vector<nn::ResidualBlock> blocks_;
  nn::Linear projection_;
  bool project_ = false;
};

}  // namespace rsvqa::vision
