#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "rsvqa/corpus/records.hpp"
#include "rsvqa/corpus/taxonomy.hpp"
#include "rsvqa/vision/encoder.hpp"

namespace rsvqa::vision {

enum class FusionKind { optical_only, sar_only, early, halfway, late };

std::string to_string(FusionKind kind);
FusionKind fusion_kind_from_string(const std::string& text);
/// Early, halfway and late fusion start from trained single-modality models.
bool needs_single_modality_models(FusionKind kind);

/// Class scores: sigmoid(f_i W + b). Checks that f_i[B,d] matches the head.
nn::Tensor classify(const nn::Linear& head, const nn::Tensor& f_i);

/// Channels 0-2 optical, 3-5 SAR.
Image fuse_early(const Image& optical, const Image& sar);

/// Concatenated features of the two frozen encoders -> one linear layer.
class HalfwayHead : public nn::Module {
 public:
  HalfwayHead() = default;
  HalfwayHead(std::size_t d_feat, std::size_t n_classes, Rng& rng);

  nn::Tensor logits(const nn::Tensor& f_opt, const nn::Tensor& f_sar) const;
  void collect(nn::ParameterList& out, const std::string& prefix) const override;

  nn::Linear layer;
};

/// fuse_halfway: sigmoid of the halfway head.
nn::Tensor fuse_halfway(const HalfwayHead& head, const nn::Tensor& f_opt, const nn::Tensor& f_sar);

/// MLP over concatenated post-sigmoid scores: 2n -> ceil(1.5n) -> n -> n,
/// ReLU between layers.
class LateHead : public nn::Module {
 public:
  LateHead() = default;
  LateHead(std::size_t n_classes, Rng& rng);

  nn::Tensor logits(const nn::Tensor& s_opt, const nn::Tensor& s_sar) const;
  /// Same MLP applied to an already concatenated [B, 2n] input.
  nn::Tensor logits(const nn::Tensor& joined) const;
  std::size_t input_size() const { return layer1.in_features(); }
  void collect(nn::ParameterList& out, const std::string& prefix) const override;

  nn::Linear layer1;
  nn::Linear layer2;
  nn::Linear layer3;
};

nn::Tensor fuse_late(const LateHead& head, const nn::Tensor& s_opt, const nn::Tensor& s_sar);

/// {j : scores[j] >= t}, t in (0,1).
std::vector<corpus::ClassId> threshold_classes(std::span<const double> scores, double t = 0.5);
std::vector<std::uint8_t> threshold_mask(std::span<const double> scores, double t = 0.5);

struct VisualModelConfig {
  FusionKind kind = FusionKind::optical_only;
  /// Per-modality encoder. Early fusion widens the input to 6 channels.
  EncoderConfig encoder;
  std::size_t n_classes = 0;
  double threshold = 0.5;

  void validate() const;
};

nlohmann::json to_json(const VisualModelConfig& c);
VisualModelConfig visual_model_config_from_json(const nlohmann::json& j);

using PatchBatch = std::span<const corpus::PatchRecord* const>;

/// One of the five visual models. Halfway and late fusion hold their frozen
/// single-modality parts, so a saved model is self-contained.
class VisualModel : public nn::Module {
 public:
  VisualModel(const VisualModelConfig& config, Rng& rng);

  const VisualModelConfig& config() const { return config_; }
  FusionKind kind() const { return config_.kind; }

  /// Input to the trainable part. For halfway and late fusion this is the
  /// output of the frozen backbones, computed without a graph, so it can be
  /// cached per patch.
  nn::Tensor head_input(PatchBatch batch) const;
  nn::Tensor head_logits(const nn::Tensor& input) const;
  nn::Tensor logits(PatchBatch batch) const { return head_logits(head_input(batch)); }
  bool has_frozen_backbone() const;

  /// Visual feature f_i. Late fusion has none and throws ConfigError.
  nn::Tensor features(PatchBatch batch) const;
  std::size_t feature_size() const;

  /// Copies trained optical-only and SAR-only models into this fusion model.
  /// Early fusion: stem channels 0-2 from the optical stem, 3-5 from the SAR
  /// stem, stem bias their sum, later layers from the optical encoder.
  void initialize_from(const VisualModel& optical, const VisualModel& sar);

  void collect(nn::ParameterList& out, const std::string& prefix) const override;

  const Encoder& primary_encoder() const { return encoder_a_; }
  const Encoder& sar_encoder() const { return encoder_b_; }
  const nn::Linear& head() const { return head_a_; }
  const HalfwayHead& halfway_head() const { return halfway_; }
  const LateHead& late_head() const { return late_; }

 private:
  nn::Tensor modality_input(PatchBatch batch, bool sar) const;

  VisualModelConfig config_;
  Encoder encoder_a_;  // optical, SAR or 6-channel
  Encoder encoder_b_;  // SAR encoder of halfway / late fusion
  nn::Linear head_a_;
  nn::Linear head_b_;
  HalfwayHead halfway_;
  LateHead late_;
};

}  // namespace rsvqa::vision
