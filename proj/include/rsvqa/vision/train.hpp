#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "rsvqa/eval/metrics.hpp"
#include "rsvqa/vision/fusion.hpp"

namespace rsvqa::vision {

struct TrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  /// Stop after this many epochs without a validation-loss improvement and
  /// restore the best weights. 0 disables early stopping.
  std::size_t patience = 0;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> train_metric;
  std::optional<double> val_loss;
  std::optional<double> val_metric;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  std::string metric_name;

  nlohmann::ordered_json to_json() const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minimizes mean BCE over the model's trainable parameters with Adam. Batch
/// order is drawn from `options.seed`. The validation metric is F1-micro.
TrainLog train_visual_model(VisualModel& model, std::span<const corpus::PatchRecord> train,
                            std::span<const corpus::PatchRecord> val, const TrainOptions& options,
                            const EpochCallback& on_epoch = {});

/// Sigmoid scores [N][n_c], computed without a graph.
std::vector<std::vector<double>> predict_scores(const VisualModel& model,
                                                std::span<const corpus::PatchRecord> patches,
                                                std::size_t batch_size = 64);
eval::BinaryMatrix predict_classes(const VisualModel& model, std::span<const corpus::PatchRecord> patches,
                                   std::size_t batch_size = 64);
eval::ClassificationMetrics evaluate_visual_model(const VisualModel& model,
                                                  std::span<const corpus::PatchRecord> patches);

void save_visual_model(const std::filesystem::path& path, const VisualModel& model,
                       const nlohmann::json& extra = nlohmann::json::object());
VisualModel load_visual_model(const std::filesystem::path& path);

}  // namespace rsvqa::vision
