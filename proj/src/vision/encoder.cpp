#include "rsvqa/vision/encoder.hpp"

#include "rsvqa/common/errors.hpp"

namespace rsvqa::vision {

std::string to_string(PretrainedSource s) {
  return s == PretrainedSource::none ? "none" : "classification_task";
}

PretrainedSource pretrained_source_from_string(const std::string& text) {
  if (text == "none") return PretrainedSource::none;
  if (text == "classification_task") return PretrainedSource::classification_task;
  throw ConfigError("unknown pretrained_source '" + text + "'");
}

void EncoderConfig::validate() const {
  if (in_channels != 3 && in_channels != 6) {
    throw ConfigError("encoder in_channels must be 3 or 6, got " + std::to_string(in_channels));
  }
  if (widths.empty()) throw ConfigError("encoder needs at least one stage width");
  for (auto w : widths) {
    if (w == 0) throw ConfigError("encoder stage widths must be positive");
  }
  if (d_feat == 0) throw ConfigError("d_feat must be positive");
}

nlohmann::json to_json(const EncoderConfig& c) {
  return {{"in_channels", c.in_channels}, {"widths", c.widths}, {"d_feat", c.d_feat},
          {"pretrained_source", to_string(c.pretrained_source)}, {"frozen", c.frozen}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.in_channels = j.value("in_channels", c.in_channels);
  c.widths = j.value("widths", c.widths);
  c.d_feat = j.value("d_feat", c.d_feat);
  c.pretrained_source = pretrained_source_from_string(j.value("pretrained_source", std::string("none")));
  c.frozen = j.value("frozen", c.frozen);
  c.validate();
  return c;
}

nn::Tensor stack_images(std::span<const Image* const> images) {
  if (images.empty()) throw InvalidInput("cannot stack an empty image list");
  const auto& first = *images[0];
  std::vector<double> values;
  values.reserve(images.size() * first.data.size());
  for (const auto* img : images) {
    if (img->channels != first.channels || img->height != first.height || img->width != first.width) {
      throw InvalidInput("images in a batch must share one shape");
    }
    values.insert(values.end(), img->data.begin(), img->data.end());
  }
  return nn::Tensor::from({images.size(), first.channels, first.height, first.width}, std::move(values));
}

Encoder::Encoder(const EncoderConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  stem_ = nn::Conv2d(config_.in_channels, config_.widths[0], 3, 1, 1, rng);
  std::size_t in = config_.widths[0];
  for (std::size_t i = 0; i < config_.widths.size(); ++i) {
    blocks_.emplace_back(in, config_.widths[i], i == 0 ? 1 : 2, rng);
    in = config_.widths[i];
  }
  project_ = in != config_.d_feat;
  if (project_) projection_ = nn::Linear(in, config_.d_feat, rng);
  if (config_.frozen) set_trainable(false);
}

nn::Tensor Encoder::operator()(const nn::Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != config_.in_channels) {
    throw InvalidInput("encoder expects [B," + std::to_string(config_.in_channels) + ",H,W] input, got " +
                       nn::shape_string(x.shape()));
  }
  auto h = nn::relu(stem_(x));
  for (const auto& block : blocks_) h = block(h);
  auto f = nn::global_avg_pool(h);
  return project_ ? projection_(f) : f;
}

std::vector<double> Encoder::encode(const Image& image) const {
  nn::NoGradGuard guard;
  const Image* one[] = {&image};
  return (*this)(stack_images(one)).values();
}

void Encoder::collect(nn::ParameterList& out, const std::string& prefix) const {
  stem_.collect(out, nn::join_name(prefix, "stem"));
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].collect(out, nn::join_name(prefix, "block" + std::to_string(i)));
  }
  if (project_) projection_.collect(out, nn::join_name(prefix, "projection"));
}

}  // namespace rsvqa::vision
