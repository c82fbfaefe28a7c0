#include "rsvqa/pipelines/training.hpp"

#include <limits>
#include <numeric>

#include "rsvqa/common/errors.hpp"
#include "rsvqa/nn/optim.hpp"

namespace rsvqa::pipelines {
namespace {

std::vector<const VqaSample*> gather(std::span<const VqaSample> samples, std::span<const std::size_t> idx) {
  std::vector<const VqaSample*> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(&samples[i]);
  return out;
}

std::vector<int> targets_of(std::span<const VqaSample* const> batch) {
  std::vector<int> out;
  for (const auto* s : batch) out.push_back(s->target);
  return out;
}

template <typename Fn>
void for_each_chunk(std::size_t n, std::size_t batch, Fn&& fn) {
  for (std::size_t start = 0; start < n; start += batch) {
    std::vector<std::size_t> idx(std::min(batch, n - start));
    std::iota(idx.begin(), idx.end(), start);
    fn(idx);
  }
}

}  // namespace

std::vector<VqaSample> make_end_to_end_samples(std::span<const corpus::QARecord> records,
                                               const std::map<std::string, std::vector<double>>& features,
                                               const TokenVocabulary& tokens, const AnswerVocabulary& answers) {
  std::vector<VqaSample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    auto f = features.find(r.patch_id);
    if (f == features.end()) throw DataError("no visual feature for patch '" + r.patch_id + "'");
    auto ids = tokens.encode(r.question);
    if (ids.empty()) throw InvalidInput("question for patch '" + r.patch_id + "' is empty after tokenization");
    out.push_back({r.patch_id, r.question, r.qtype, r.answer, answers.target(r.answer), std::move(ids), f->second});
  }
  return out;
}

std::vector<VqaSample> make_prompt_samples(std::span<const corpus::QARecord> records,
                                           const std::map<std::string, std::string>& contexts,
                                           const TokenVocabulary& tokens, const AnswerVocabulary& answers,
                                           std::size_t max_len) {
  std::vector<VqaSample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    auto c = contexts.find(r.patch_id);
    if (c == contexts.end()) throw DataError("no context for patch '" + r.patch_id + "'");
    out.push_back({r.patch_id, r.question, r.qtype, r.answer, answers.target(r.answer),
                   prompt_tokens(r.question, c->second, tokens, max_len), {}});
  }
  return out;
}

vision::TrainLog train_vqa_model(VqaModel& model, std::span<const VqaSample> train, std::span<const VqaSample> val,
                                 const VqaTrainOptions& options, const vision::EpochCallback& on_epoch) {
  if (options.epochs == 0 || options.batch_size == 0 || !(options.learning_rate > 0.0)) {
    throw ConfigError("epochs, batch_size and learning_rate must be positive");
  }
  if (train.empty()) throw InvalidInput("training set is empty");
  const auto params = model.parameters();
  nn::ParameterList trainable;
  for (const auto& p : params) {
    if (p.tensor.requires_grad()) trainable.push_back(p);
  }
  nn::Adam adam(trainable, {.learning_rate = options.learning_rate});
  Rng order_rng(derive_seed(options.seed, "batch-order"));
  Rng dropout_rng(derive_seed(options.seed, "dropout"));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  vision::TrainLog log;
  log.metric_name = "accuracy";
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      std::span<const std::size_t> idx(order.data() + start, std::min(options.batch_size, order.size() - start));
      auto batch = gather(train, idx);
      adam.zero_grad();
      auto loss = nn::cross_entropy(model.logits(batch, true, dropout_rng), targets_of(batch));
      loss.backward();
      adam.step();
      loss_sum += loss.item() * static_cast<double>(idx.size());
    }
    vision::EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    if (options.track_train_accuracy || options.stop_at_train_accuracy) {
      rec.train_metric = answer_accuracy(model, train);
    }
    if (!val.empty()) {
      nn::NoGradGuard guard;
      double val_sum = 0.0;
      std::size_t correct = 0;
      for_each_chunk(val.size(), options.batch_size, [&](const std::vector<std::size_t>& idx) {
        auto batch = gather(val, idx);
        auto logits = model.logits(batch, false, dropout_rng);
        val_sum += nn::cross_entropy(logits, targets_of(batch)).item() * static_cast<double>(idx.size());
        const auto width = logits.dim(1);
        for (std::size_t r = 0; r < idx.size(); ++r) {
          const auto pred = argmax(std::span<const double>(logits.values().data() + r * width, width));
          correct += batch[r]->target >= 0 && pred == static_cast<std::size_t>(batch[r]->target);
        }
      });
      rec.val_loss = val_sum / static_cast<double>(val.size());
      rec.val_metric = static_cast<double>(correct) / static_cast<double>(val.size());
    }
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const double score = rec.val_loss.value_or(rec.train_loss);
    if (score < best_val) {
      best_val = score;
      log.best_epoch = epoch;
      since_best = 0;
      if (options.patience > 0) {
        best.clear();
        for (const auto& p : params) best.push_back(p.tensor.values());
      }
    } else if (options.patience > 0 && ++since_best >= options.patience) {
      log.stopped_early = epoch < options.epochs;
      break;
    }
    if (options.stop_at_train_accuracy && *rec.train_metric >= *options.stop_at_train_accuracy) {
      log.stopped_early = epoch < options.epochs;
      log.best_epoch = epoch;
      best.clear();
      break;
    }
  }
  if (!best.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto t = params[i].tensor;
      std::ranges::copy(best[i], t.data().begin());
    }
  } else if (options.patience == 0 && !options.stop_at_train_accuracy) {
    log.best_epoch = log.epochs.size();
  }
  return log;
}

std::vector<std::size_t> predict_answers(const VqaModel& model, std::span<const VqaSample> samples,
                                         std::size_t batch_size) {
  if (batch_size == 0) throw InvalidInput("batch_size must be positive");
  nn::NoGradGuard guard;
  Rng unused(0);
  std::vector<std::size_t> out;
  out.reserve(samples.size());
  for_each_chunk(samples.size(), batch_size, [&](const std::vector<std::size_t>& idx) {
    auto batch = gather(samples, idx);
    auto logits = model.logits(batch, false, unused);
    const auto width = logits.dim(1);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      out.push_back(argmax(std::span<const double>(logits.values().data() + r * width, width)));
    }
  });
  return out;
}

std::vector<eval::PredictionRecord> predict(const VqaModel& model, std::span<const VqaSample> samples,
                                            const AnswerVocabulary& answers, std::size_t batch_size) {
  const auto predicted = predict_answers(model, samples, batch_size);
  std::vector<eval::PredictionRecord> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const bool correct = s.target >= 0 && predicted[i] == static_cast<std::size_t>(s.target);
    out.push_back({s.patch_id, s.question, s.qtype, s.answer, answers.answer(predicted[i]), correct});
  }
  return out;
}

double answer_accuracy(const VqaModel& model, std::span<const VqaSample> samples,
                       std::optional<corpus::QuestionType> only) {
  const auto predicted = predict_answers(model, samples);
  std::size_t n = 0, correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (only && samples[i].qtype != *only) continue;
    ++n;
    correct += samples[i].target >= 0 && predicted[i] == static_cast<std::size_t>(samples[i].target);
  }
  if (n == 0) throw InvalidInput("no samples to score");
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace rsvqa::pipelines
