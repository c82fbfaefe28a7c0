#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "rsvqa/corpus/records.hpp"
#include "rsvqa/corpus/taxonomy.hpp"
#include "rsvqa/nn/layers.hpp"
#include "rsvqa/pipelines/vocabulary.hpp"

namespace rsvqa::pipelines {

/// One training or evaluation example, already turned into model inputs.
/// `tokens` are question ids for the end-to-end model and the full
/// "[CLS] question [SEP] context" sequence for the prompt model.
struct VqaSample {
  std::string patch_id;
  std::string question;
  corpus::QuestionType qtype = corpus::QuestionType::yes_no;
  std::string answer;
  int target = AnswerVocabulary::kOov;
  std::vector<std::size_t> tokens;
  std::vector<double> visual;  // f_i, end-to-end only
};

using SampleBatch = std::span<const VqaSample* const>;

class VqaModel : public nn::Module {
 public:
  /// Answer scores [B, |A|]. `rng` drives dropout when `training` is set.
  virtual nn::Tensor logits(SampleBatch batch, bool training, Rng& rng) const = 0;
  virtual std::string name() const = 0;
  virtual nlohmann::json config_json() const = 0;
};

/// GRU over embedded tokens; f_q is the last hidden state. Batches of
/// different lengths are masked so padding never changes a finished row.
class QuestionEncoder : public nn::Module {
 public:
  QuestionEncoder() = default;
  QuestionEncoder(std::size_t vocab_size, std::size_t embed_width, std::size_t hidden, Rng& rng);

  nn::Tensor operator()(std::span<const std::vector<std::size_t>* const> sequences) const;
  /// Single question in eval mode. Throws InvalidInput if it has no tokens.
  std::vector<double> encode(std::string_view question, const TokenVocabulary& vocab) const;
  std::size_t output_size() const { return cell_.hidden_size(); }
  void collect(nn::ParameterList& out, const std::string& prefix) const override;

 private:
  nn::Embedding embed_;
  nn::GruCell cell_;
};

/// f_a = f'_i * f'_q, element-wise. Throws ConfigError on a length mismatch.
nn::Tensor e2e_fuse(const nn::Tensor& visual_projected, const nn::Tensor& question_projected);

struct EndToEndConfig {
  std::size_t embed_width = 64;
  std::size_t question_width = 128;  // d_q
  std::size_t joint_width = 512;     // n_a
  std::size_t hidden_width = 256;
  double dropout = 0.5;
};

nlohmann::json to_json(const EndToEndConfig& c);
EndToEndConfig end_to_end_config_from_json(const nlohmann::json& j);

/// f'_i = dropout(tanh(f_i Wv)), f'_q = tanh(f_q Wq), f_a = f'_i * f'_q,
/// y = MLP(f_a).
class EndToEndModel : public VqaModel {
 public:
  EndToEndModel(const EndToEndConfig& config, std::size_t visual_width, std::size_t token_vocab,
                std::size_t answer_vocab, Rng& rng);

  nn::Tensor logits(SampleBatch batch, bool training, Rng& rng) const override;
  std::string name() const override { return "end_to_end"; }
  nlohmann::json config_json() const override;

  nn::Tensor project_visual(const nn::Tensor& f_i, bool training, Rng& rng) const;
  nn::Tensor project_question(const nn::Tensor& f_q) const;
  nn::Tensor answer_head(const nn::Tensor& f_a) const;
  const QuestionEncoder& question_encoder() const { return question_; }

  void collect(nn::ParameterList& out, const std::string& prefix) const override;

 private:
  EndToEndConfig config_;
  std::size_t visual_width_;
  std::size_t token_vocab_;
  std::size_t answer_vocab_;
  QuestionEncoder question_;
  nn::Linear visual_proj_;
  nn::Linear question_proj_;
  nn::Linear hidden_;
  nn::Linear output_;
};

/// Names of `classes` in ascending id order joined by ", "; "" when empty.
std::string build_context(std::span<const corpus::ClassId> classes, const corpus::ClassTaxonomy& taxonomy);

struct PromptConfig {
  std::size_t width = 128;  // d_model
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t ff_width = 256;
  std::size_t max_len = 64;
  std::size_t hidden_width = 256;
  double dropout = 0.5;
};

nlohmann::json to_json(const PromptConfig& c);
PromptConfig prompt_config_from_json(const nlohmann::json& j);

/// "[CLS] question [SEP] context" ids, at most `max_len` long. The context
/// tail is dropped first, then the question tail.
std::vector<std::size_t> prompt_tokens(std::string_view question, std::string_view context,
                                       const TokenVocabulary& vocab, std::size_t max_len);

/// Transformer encoder over the prompt; the first position is pooled and fed
/// to sigmoid -> dropout -> Linear -> ReLU -> Linear.
class PromptModel : public VqaModel {
 public:
  PromptModel(const PromptConfig& config, std::size_t token_vocab, std::size_t answer_vocab, Rng& rng);

  nn::Tensor logits(SampleBatch batch, bool training, Rng& rng) const override;
  std::string name() const override { return "prompt"; }
  nlohmann::json config_json() const override;

  /// Pooled encoder feature for one token sequence, [1, width].
  nn::Tensor pooled(std::span<const std::size_t> tokens) const;

  void collect(nn::ParameterList& out, const std::string& prefix) const override;

 private:
  PromptConfig config_;
  std::size_t token_vocab_;
  std::size_t answer_vocab_;
  nn::Embedding tokens_;
  nn::Embedding positions_;
  std::vector<nn::TransformerEncoderLayer> layers_;
  nn::Linear hidden_;
  nn::Linear output_;
};

}  // namespace rsvqa::pipelines
