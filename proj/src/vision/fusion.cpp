#include "rsvqa/vision/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "rsvqa/common/errors.hpp"

namespace rsvqa::vision {
namespace {

void copy_values(const nn::ParameterList& from, const nn::ParameterList& to) {
  if (from.size() != to.size()) throw ConfigError("pretrained model does not match the target architecture");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].tensor.shape() != to[i].tensor.shape()) {
      throw ConfigError("pretrained tensor " + from[i].name + " has shape " +
                        nn::shape_string(from[i].tensor.shape()) + ", expected " +
                        nn::shape_string(to[i].tensor.shape()));
    }
    auto dst = to[i].tensor;
    std::ranges::copy(from[i].tensor.data(), dst.data().begin());
  }
}

void check_source(const VisualModel& model, FusionKind expected, const VisualModelConfig& target) {
  if (model.kind() != expected) {
    throw StagingError("expected a trained " + to_string(expected) + " model, got " + to_string(model.kind()));
  }
  if (model.config().n_classes != target.n_classes) throw ConfigError("pretrained model has a different class count");
  auto a = model.config().encoder, b = target.encoder;
  a.in_channels = b.in_channels = 3;
  a.frozen = b.frozen = false;
  a.pretrained_source = b.pretrained_source = PretrainedSource::none;
  if (!(a == b)) throw ConfigError("pretrained encoder configuration differs from the fusion model's");
}

}  // namespace

std::string to_string(FusionKind kind) {
  switch (kind) {
    case FusionKind::optical_only: return "optical_only";
    case FusionKind::sar_only: return "sar_only";
    case FusionKind::early: return "early";
    case FusionKind::halfway: return "halfway";
    case FusionKind::late: return "late";
  }
  return "?";
}

FusionKind fusion_kind_from_string(const std::string& text) {
  for (auto k : {FusionKind::optical_only, FusionKind::sar_only, FusionKind::early, FusionKind::halfway,
                 FusionKind::late}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown fusion kind '" + text + "'");
}

bool needs_single_modality_models(FusionKind kind) {
  return kind == FusionKind::early || kind == FusionKind::halfway || kind == FusionKind::late;
}

nn::Tensor classify(const nn::Linear& head, const nn::Tensor& f_i) {
  if (f_i.rank() != 2 || f_i.dim(1) != head.in_features()) {
    throw InvalidInput("classifier expects features of length " + std::to_string(head.in_features()) + ", got " +
                       nn::shape_string(f_i.shape()));
  }
  return nn::sigmoid(head(f_i));
}

Image fuse_early(const Image& optical, const Image& sar) {
  if (optical.channels != 3 || sar.channels != 3) throw InvalidInput("early fusion expects two 3-channel images");
  if (optical.height != sar.height || optical.width != sar.width) {
    throw InvalidInput("optical and SAR images differ in size");
  }
  Image out(6, optical.height, optical.width);
  std::ranges::copy(optical.data, out.data.begin());
  std::ranges::copy(sar.data, out.data.begin() + static_cast<std::ptrdiff_t>(optical.data.size()));
  return out;
}

HalfwayHead::HalfwayHead(std::size_t d_feat, std::size_t n_classes, Rng& rng) : layer(2 * d_feat, n_classes, rng) {}

nn::Tensor HalfwayHead::logits(const nn::Tensor& f_opt, const nn::Tensor& f_sar) const {
  if (f_opt.rank() != 2 || f_sar.rank() != 2 || f_opt.dim(1) + f_sar.dim(1) != layer.in_features() ||
      f_opt.dim(1) != f_sar.dim(1)) {
    throw InvalidInput("halfway fusion expects two features of length " + std::to_string(layer.in_features() / 2));
  }
  return layer(nn::concat_cols({f_opt, f_sar}));
}

void HalfwayHead::collect(nn::ParameterList& out, const std::string& prefix) const { layer.collect(out, prefix); }

nn::Tensor fuse_halfway(const HalfwayHead& head, const nn::Tensor& f_opt, const nn::Tensor& f_sar) {
  return nn::sigmoid(head.logits(f_opt, f_sar));
}

LateHead::LateHead(std::size_t n, Rng& rng)
    : layer1(2 * n, (3 * n + 1) / 2, rng), layer2((3 * n + 1) / 2, n, rng), layer3(n, n, rng) {}

nn::Tensor LateHead::logits(const nn::Tensor& joined) const {
  if (joined.rank() != 2 || joined.dim(1) != input_size()) {
    throw InvalidInput("late fusion expects an input of length " + std::to_string(input_size()) + ", got " +
                       nn::shape_string(joined.shape()));
  }
  return layer3(nn::relu(layer2(nn::relu(layer1(joined)))));
}

nn::Tensor LateHead::logits(const nn::Tensor& s_opt, const nn::Tensor& s_sar) const {
  if (s_opt.rank() != 2 || s_sar.rank() != 2 || s_opt.dim(1) != s_sar.dim(1)) {
    throw InvalidInput("late fusion expects two score vectors of equal length");
  }
  return logits(nn::concat_cols({s_opt, s_sar}));
}

void LateHead::collect(nn::ParameterList& out, const std::string& prefix) const {
  layer1.collect(out, nn::join_name(prefix, "layer1"));
  layer2.collect(out, nn::join_name(prefix, "layer2"));
  layer3.collect(out, nn::join_name(prefix, "layer3"));
}

nn::Tensor fuse_late(const LateHead& head, const nn::Tensor& s_opt, const nn::Tensor& s_sar) {
  return nn::sigmoid(head.logits(s_opt, s_sar));
}

std::vector<corpus::ClassId> threshold_classes(std::span<const double> scores, double t) {
  std::vector<corpus::ClassId> out;
  const auto mask = threshold_mask(scores, t);
  for (std::size_t j = 0; j < mask.size(); ++j) {
    if (mask[j]) out.push_back(j);
  }
  return out;
}

std::vector<std::uint8_t> threshold_mask(std::span<const double> scores, double t) {
  if (!(t > 0.0 && t < 1.0)) throw InvalidInput("threshold must lie in (0,1)");
  std::vector<std::uint8_t> out(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j) out[j] = scores[j] >= t ? 1 : 0;
  return out;
}

void VisualModelConfig::validate() const {
  encoder.validate();
  if (n_classes == 0) throw ConfigError("visual model needs at least one class");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0,1)");
  const auto expected = kind == FusionKind::early ? 6u : 3u;
  if (encoder.in_channels != expected) {
    throw ConfigError(to_string(kind) + " needs a " + std::to_string(expected) + "-channel encoder");
  }
}

nlohmann::json to_json(const VisualModelConfig& c) {
  return {{"kind", to_string(c.kind)}, {"encoder", to_json(c.encoder)}, {"n_classes", c.n_classes},
          {"threshold", c.threshold}};
}

VisualModelConfig visual_model_config_from_json(const nlohmann::json& j) {
  VisualModelConfig c;
  c.kind = fusion_kind_from_string(j.at("kind").get<std::string>());
  nlohmann::json enc = j.value("encoder", nlohmann::json::object());
  if (!enc.contains("in_channels")) enc["in_channels"] = c.kind == FusionKind::early ? 6 : 3;
  c.encoder = encoder_config_from_json(enc);
  c.n_classes = j.at("n_classes").get<std::size_t>();
  c.threshold = j.value("threshold", c.threshold);
  c.validate();
  return c;
}

VisualModel::VisualModel(const VisualModelConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const auto n = config_.n_classes;
  const auto d = config_.encoder.d_feat;
  switch (config_.kind) {
    case FusionKind::optical_only:
    case FusionKind::sar_only:
    case FusionKind::early:
      encoder_a_ = Encoder(config_.encoder, rng);
      head_a_ = nn::Linear(d, n, rng);
      break;
    case FusionKind::halfway:
    case FusionKind::late: {
      auto frozen = config_.encoder;
      frozen.frozen = true;
      frozen.pretrained_source = PretrainedSource::classification_task;
      config_.encoder = frozen;
      encoder_a_ = Encoder(frozen, rng);
      encoder_b_ = Encoder(frozen, rng);
      if (config_.kind == FusionKind::halfway) {
        halfway_ = HalfwayHead(d, n, rng);
      } else {
        head_a_ = nn::Linear(d, n, rng);
        head_b_ = nn::Linear(d, n, rng);
        head_a_.weight.set_requires_grad(false);
        head_a_.bias.set_requires_grad(false);
        head_b_.weight.set_requires_grad(false);
        head_b_.bias.set_requires_grad(false);
        late_ = LateHead(n, rng);
      }
      break;
    }
  }
}

bool VisualModel::has_frozen_backbone() const {
  return config_.kind == FusionKind::halfway || config_.kind == FusionKind::late;
}

nn::Tensor VisualModel::modality_input(PatchBatch batch, bool sar) const {
  std::vector<const Image*> images;
  for (const auto* p : batch) images.push_back(sar ? &p->sar : &p->optical);
  return stack_images(images);
}

nn::Tensor VisualModel::head_input(PatchBatch batch) const {
  if (batch.empty()) throw InvalidInput("empty batch");
  switch (config_.kind) {
    case FusionKind::optical_only: return modality_input(batch, false);
    case FusionKind::sar_only: return modality_input(batch, true);
    case FusionKind::early: {
      std::vector<Image> fused;
      fused.reserve(batch.size());
      for (const auto* p : batch) fused.push_back(fuse_early(p->optical, p->sar));
      std::vector<const Image*> ptrs;
      for (const auto& img : fused) ptrs.push_back(&img);
      return stack_images(ptrs);
    }
    case FusionKind::halfway: {
      nn::NoGradGuard guard;
      return nn::concat_cols({encoder_a_(modality_input(batch, false)), encoder_b_(modality_input(batch, true))});
    }
    case FusionKind::late: {
      nn::NoGradGuard guard;
      return nn::concat_cols({classify(head_a_, encoder_a_(modality_input(batch, false))),
                              classify(head_b_, encoder_b_(modality_input(batch, true)))});
    }
  }
  return {};
}

nn::Tensor VisualModel::head_logits(const nn::Tensor& input) const {
  switch (config_.kind) {
    case FusionKind::optical_only:
    case FusionKind::sar_only:
    case FusionKind::early: return head_a_(encoder_a_(input));
    case FusionKind::halfway: {
      const auto d = config_.encoder.d_feat;
      if (input.rank() != 2 || input.dim(1) != 2 * d) throw InvalidInput("halfway head input has the wrong width");
      return halfway_.logits(nn::slice_cols(input, 0, d), nn::slice_cols(input, d, d));
    }
    case FusionKind::late: return late_.logits(input);
  }
  return {};
}

nn::Tensor VisualModel::features(PatchBatch batch) const {
  switch (config_.kind) {
    case FusionKind::optical_only:
    case FusionKind::sar_only:
    case FusionKind::early: return encoder_a_(head_input(batch));
    case FusionKind::halfway: return head_input(batch);
    case FusionKind::late: break;
  }
  throw ConfigError("late fusion produces class scores, not a visual feature vector");
}

std::size_t VisualModel::feature_size() const {
  if (config_.kind == FusionKind::late) {
    throw ConfigError("late fusion produces class scores, not a visual feature vector");
  }
  return config_.kind == FusionKind::halfway ? 2 * config_.encoder.d_feat : config_.encoder.d_feat;
}

void VisualModel::initialize_from(const VisualModel& optical, const VisualModel& sar) {
  if (!needs_single_modality_models(config_.kind)) {
    throw ConfigError(to_string(config_.kind) + " is trained from scratch");
  }
  check_source(optical, FusionKind::optical_only, config_);
  check_source(sar, FusionKind::sar_only, config_);
  switch (config_.kind) {
    case FusionKind::early: {
      // Stem: channels 0-2 optical, 3-5 SAR.
      auto& w = encoder_a_.stem().weight;
      const auto& wo = optical.encoder_a_.stem().weight;
      const auto& ws = sar.encoder_a_.stem().weight;
      const std::size_t out = w.dim(0), k2 = w.dim(2) * w.dim(3);
      for (std::size_t o = 0; o < out; ++o) {
        for (std::size_t c = 0; c < 3; ++c) {
          for (std::size_t i = 0; i < k2; ++i) {
            w.data()[(o * 6 + c) * k2 + i] = wo.data()[(o * 3 + c) * k2 + i];
            w.data()[(o * 6 + 3 + c) * k2 + i] = ws.data()[(o * 3 + c) * k2 + i];
          }
        }
        encoder_a_.stem().bias.data()[o] =
            optical.encoder_a_.stem().bias.data()[o] + sar.encoder_a_.stem().bias.data()[o];
      }
      auto rest_from = optical.encoder_a_.parameters();
      auto rest_to = encoder_a_.parameters();
      rest_from.erase(rest_from.begin(), rest_from.begin() + 2);
      rest_to.erase(rest_to.begin(), rest_to.begin() + 2);
      copy_values(rest_from, rest_to);
      config_.encoder.pretrained_source = PretrainedSource::classification_task;
      break;
    }
    case FusionKind::halfway:
      copy_values(optical.encoder_a_.parameters(), encoder_a_.parameters());
      copy_values(sar.encoder_a_.parameters(), encoder_b_.parameters());
      break;
    case FusionKind::late:
      copy_values(optical.encoder_a_.parameters(), encoder_a_.parameters());
      copy_values(sar.encoder_a_.parameters(), encoder_b_.parameters());
      copy_values(optical.head_a_.parameters(), head_a_.parameters());
      copy_values(sar.head_a_.parameters(), head_b_.parameters());
      break;
    default: break;
  }
}

void VisualModel::collect(nn::ParameterList& out, const std::string& prefix) const {
  switch (config_.kind) {
    case FusionKind::optical_only:
    case FusionKind::sar_only:
    case FusionKind::early:
      encoder_a_.collect(out, nn::join_name(prefix, "encoder"));
      head_a_.collect(out, nn::join_name(prefix, "head"));
      break;
    case FusionKind::halfway:
      encoder_a_.collect(out, nn::join_name(prefix, "optical.encoder"));
      encoder_b_.collect(out, nn::join_name(prefix, "sar.encoder"));
      halfway_.collect(out, nn::join_name(prefix, "fusion"));
      break;
    case FusionKind::late:
      encoder_a_.collect(out, nn::join_name(prefix, "optical.encoder"));
      head_a_.collect(out, nn::join_name(prefix, "optical.head"));
      encoder_b_.collect(out, nn::join_name(prefix, "sar.encoder"));
      head_b_.collect(out, nn::join_name(prefix, "sar.head"));
      late_.collect(out, nn::join_name(prefix, "fusion"));
      break;
  }
}

}  // namespace rsvqa::vision
