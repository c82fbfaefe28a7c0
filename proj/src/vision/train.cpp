#include "rsvqa/vision/train.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "rsvqa/common/errors.hpp"
#include "rsvqa/nn/checkpoint.hpp"
#include "rsvqa/nn/optim.hpp"

namespace rsvqa::vision {
namespace {

std::vector<const corpus::PatchRecord*> pointers(std::span<const corpus::PatchRecord> patches,
                                                 std::span<const std::size_t> index) {
  std::vector<const corpus::PatchRecord*> out;
  out.reserve(index.size());
  for (auto i : index) out.push_back(&patches[i]);
  return out;
}

std::vector<double> label_targets(std::span<const corpus::PatchRecord> patches, std::span<const std::size_t> index,
                                  std::size_t n_classes) {
  std::vector<double> out;
  out.reserve(index.size() * n_classes);
  for (auto i : index) {
    if (patches[i].labels.size() != n_classes) {
      throw InvalidInput("patch " + patches[i].patch_id + " has " + std::to_string(patches[i].labels.size()) +
                         " labels, model expects " + std::to_string(n_classes));
    }
    for (auto b : patches[i].labels) out.push_back(b);
  }
  return out;
}

// Head inputs of frozen-backbone models, one row per patch.
struct InputCache {
  std::size_t width = 0;
  std::vector<double> rows;

  nn::Tensor gather(std::span<const std::size_t> index) const {
    std::vector<double> v;
    v.reserve(index.size() * width);
    for (auto i : index) v.insert(v.end(), rows.begin() + i * width, rows.begin() + (i + 1) * width);
    return nn::Tensor::from({index.size(), width}, std::move(v));
  }
};

InputCache build_cache(const VisualModel& model, std::span<const corpus::PatchRecord> patches, std::size_t batch) {
  InputCache cache;
  for (std::size_t start = 0; start < patches.size(); start += batch) {
    std::vector<std::size_t> idx(std::min(batch, patches.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    auto ptrs = pointers(patches, idx);
    auto input = model.head_input(ptrs);
    cache.width = input.dim(1);
    cache.rows.insert(cache.rows.end(), input.values().begin(), input.values().end());
  }
  return cache;
}

struct Snapshot {
  std::vector<std::vector<double>> values;

  static Snapshot take(const nn::ParameterList& params) {
    Snapshot s;
    for (const auto& p : params) s.values.emplace_back(p.tensor.values());
    return s;
  }
  void restore(const nn::ParameterList& params) const {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto t = params[i].tensor;
      std::ranges::copy(values[i], t.data().begin());
    }
  }
};

}  // namespace

void TrainOptions::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
}

nlohmann::ordered_json TrainLog::to_json() const {
  nlohmann::ordered_json j;
  j["metric"] = metric_name;
  j["best_epoch"] = best_epoch;
  j["stopped_early"] = stopped_early;
  j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : epochs) {
    nlohmann::ordered_json r{{"epoch", e.epoch}, {"train_loss", e.train_loss}};
    if (e.train_metric) r["train_metric"] = *e.train_metric;
    r["val_loss"] = e.val_loss ? nlohmann::ordered_json(*e.val_loss) : nlohmann::ordered_json(nullptr);
    r["val_metric"] = e.val_metric ? nlohmann::ordered_json(*e.val_metric) : nlohmann::ordered_json(nullptr);
    j["epochs"].push_back(r);
  }
  return j;
}

TrainLog train_visual_model(VisualModel& model, std::span<const corpus::PatchRecord> train,
                            std::span<const corpus::PatchRecord> val, const TrainOptions& options,
                            const EpochCallback& on_epoch) {
  options.validate();
  if (train.empty()) throw InvalidInput("training set is empty");
  const auto n_classes = model.config().n_classes;
  const auto all_params = model.parameters();
  nn::ParameterList trainable;
  for (const auto& p : all_params) {
    if (p.tensor.requires_grad()) trainable.push_back(p);
  }
  if (trainable.empty()) throw ConfigError("model has no trainable parameters");
  nn::Adam adam(trainable, {.learning_rate = options.learning_rate});

  std::optional<InputCache> train_cache, val_cache;
  if (model.has_frozen_backbone()) {
    train_cache = build_cache(model, train, options.batch_size);
    if (!val.empty()) val_cache = build_cache(model, val, options.batch_size);
  }
  auto batch_logits = [&](std::span<const corpus::PatchRecord> set, const std::optional<InputCache>& cache,
                          std::span<const std::size_t> idx) {
    if (cache) return model.head_logits(cache->gather(idx));
    auto ptrs = pointers(set, idx);
    return model.logits(ptrs);
  };

  TrainLog log;
  log.metric_name = "f1_micro";
  Rng order_rng(derive_seed(options.seed, "batch-order"));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  double best_val = std::numeric_limits<double>::infinity();
  std::optional<Snapshot> best;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      std::span<const std::size_t> idx(order.data() + start, std::min(options.batch_size, order.size() - start));
      adam.zero_grad();
      auto loss = nn::bce_with_logits(batch_logits(train, train_cache, idx), label_targets(train, idx, n_classes));
      loss.backward();
      adam.step();
      loss_sum += loss.item() * static_cast<double>(idx.size());
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(train.size()), std::nullopt, std::nullopt, std::nullopt};

    if (!val.empty()) {
      nn::NoGradGuard guard;
      double val_sum = 0.0;
      eval::ClassificationAccumulator acc(n_classes);
      for (std::size_t start = 0; start < val.size(); start += options.batch_size) {
        std::vector<std::size_t> idx(std::min(options.batch_size, val.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        auto logits = batch_logits(val, val_cache, idx);
        val_sum += nn::bce_with_logits(logits, label_targets(val, idx, n_classes)).item() *
                   static_cast<double>(idx.size());
        auto scores = nn::sigmoid(logits);
        for (std::size_t r = 0; r < idx.size(); ++r) {
          std::span<const double> row(scores.values().data() + r * n_classes, n_classes);
          acc.add(threshold_mask(row, model.config().threshold), val[idx[r]].labels);
        }
      }
      rec.val_loss = val_sum / static_cast<double>(val.size());
      rec.val_metric = acc.result().f1_micro;
    }
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const double score = rec.val_loss.value_or(rec.train_loss);
    if (score < best_val) {
      best_val = score;
      log.best_epoch = epoch;
      since_best = 0;
      if (options.patience > 0) best = Snapshot::take(all_params);
    } else if (options.patience > 0 && ++since_best >= options.patience) {
      log.stopped_early = epoch < options.epochs;
      break;
    }
  }
  if (best) best->restore(all_params);
  if (options.patience == 0) log.best_epoch = log.epochs.size();
  return log;
}

std::vector<std::vector<double>> predict_scores(const VisualModel& model,
                                                std::span<const corpus::PatchRecord> patches,
                                                std::size_t batch_size) {
  if (batch_size == 0) throw InvalidInput("batch_size must be positive");
  nn::NoGradGuard guard;
  const auto n = model.config().n_classes;
  std::vector<std::vector<double>> out;
  out.reserve(patches.size());
  for (std::size_t start = 0; start < patches.size(); start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, patches.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    auto ptrs = pointers(patches, idx);
    auto scores = nn::sigmoid(model.logits(ptrs));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      out.emplace_back(scores.values().begin() + static_cast<std::ptrdiff_t>(r * n),
                       scores.values().begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
    }
  }
  return out;
}

eval::BinaryMatrix predict_classes(const VisualModel& model, std::span<const corpus::PatchRecord> patches,
                                   std::size_t batch_size) {
  eval::BinaryMatrix out;
  for (const auto& row : predict_scores(model, patches, batch_size)) {
    out.push_back(threshold_mask(row, model.config().threshold));
  }
  return out;
}

eval::ClassificationMetrics evaluate_visual_model(const VisualModel& model,
                                                  std::span<const corpus::PatchRecord> patches) {
  if (patches.empty()) throw InvalidInput("cannot evaluate on an empty split");
  eval::BinaryMatrix gold;
  for (const auto& p : patches) gold.push_back(p.labels);
  return eval::classification_metrics(predict_classes(model, patches), gold);
}

void save_visual_model(const std::filesystem::path& path, const VisualModel& model, const nlohmann::json& extra) {
  nlohmann::json header = extra;
  header["visual_model"] = to_json(model.config());
  nn::save_checkpoint(path, nn::Checkpoint::capture(header, model.parameters()));
}

VisualModel load_visual_model(const std::filesystem::path& path) {
  const auto ck = nn::load_checkpoint(path);
  if (!ck.header.contains("visual_model")) throw DataError(path.string() + " does not hold a visual model");
  auto config = visual_model_config_from_json(ck.header["visual_model"]);
  Rng rng(0);
  VisualModel model(config, rng);
  ck.restore(model.parameters());
  return model;
}

}  // namespace rsvqa::vision
