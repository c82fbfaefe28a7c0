#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rsvqa/eval/metrics.hpp"
#include "rsvqa/pipelines/models.hpp"
#include "rsvqa/vision/train.hpp"

namespace rsvqa::pipelines {

/// Builds end-to-end samples; `features` maps patch id to f_i.
std::vector<VqaSample> make_end_to_end_samples(std::span<const corpus::QARecord> records,
                                               const std::map<std::string, std::vector<double>>& features,
                                               const TokenVocabulary& tokens, const AnswerVocabulary& answers);

/// Builds prompt samples; `contexts` maps patch id to its context string.
std::vector<VqaSample> make_prompt_samples(std::span<const corpus::QARecord> records,
                                           const std::map<std::string, std::string>& contexts,
                                           const TokenVocabulary& tokens, const AnswerVocabulary& answers,
                                           std::size_t max_len);

struct VqaTrainOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  /// Early stop on validation loss, as for the visual models. 0 disables it.
  std::size_t patience = 0;
  /// Stop as soon as eval-mode training accuracy reaches this value.
  std::optional<double> stop_at_train_accuracy;
  /// Record eval-mode training accuracy every epoch.
  bool track_train_accuracy = false;
};

/// Mean cross-entropy over in-vocabulary answers, Adam, seed-determined batch
/// order and dropout. Validation metric: overall accuracy.
vision::TrainLog train_vqa_model(VqaModel& model, std::span<const VqaSample> train,
                                 std::span<const VqaSample> val, const VqaTrainOptions& options,
                                 const vision::EpochCallback& on_epoch = {});

/// Predicted answer indices in eval mode (argmax, lowest index on ties).
std::vector<std::size_t> predict_answers(const VqaModel& model, std::span<const VqaSample> samples,
                                         std::size_t batch_size = 64);

/// Prediction dump rows. Gold answers outside the vocabulary are never correct.
std::vector<eval::PredictionRecord> predict(const VqaModel& model, std::span<const VqaSample> samples,
                                            const AnswerVocabulary& answers, std::size_t batch_size = 64);

/// Fraction of samples answered correctly, optionally restricted to one type.
double answer_accuracy(const VqaModel& model, std::span<const VqaSample> samples,
                       std::optional<corpus::QuestionType> only = std::nullopt);

}  // namespace rsvqa::pipelines
