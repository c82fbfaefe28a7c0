#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

#include "rsvqa/corpus/questions.hpp"
#include "rsvqa/corpus/scene.hpp"
#include "rsvqa/corpus/split.hpp"
#include "rsvqa/pipelines/models.hpp"
#include "rsvqa/vision/train.hpp"

namespace rsvqa::runner {

std::string sha256_hex(std::string_view bytes);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

// Dataset configuration, the "dataset" object of a build-dataset config:
//   {"source": "synthetic", "patches": 500, "questions_per_patch": 25, "seed": 0,
//    "scene": {"n_classes", "size", "noise_level", "class_frequency", "optical_only": [...],
//              "sar_only": [...], "parents": [...]},
//    "split": {"train", "val", "test"}, "mix": {...}}
// or {"source": "manifest", "manifest": PATH, "taxonomy": "clc61" | PATH, ...}.
enum class DatasetSource { synthetic, manifest };

struct DatasetConfig {
  DatasetSource source = DatasetSource::synthetic;
  corpus::SceneConfig scene;
  std::size_t patches = 500;
  std::size_t questions_per_patch = 25;
  std::uint64_t seed = 0;
  corpus::SplitFractions split;
  corpus::QuestionMix mix;
  std::filesystem::path manifest;
  std::string taxonomy = "clc61";

  void validate() const;
};

DatasetConfig dataset_config_from_json(const nlohmann::json& doc);
corpus::SceneConfig scene_config_from_json(const nlohmann::json& j);

enum class Task { classification, vqa };
enum class PipelineKind { end_to_end, prompt };
enum class ContextSource { predicted, oracle };

std::string to_string(Task t);
std::string to_string(PipelineKind p);
std::string to_string(ContextSource c);

// Experiment configuration for train:
//   {"name", "dataset": DIR, "task": "classification" | "vqa",
//    "model": {"fusion" | "pipeline", ...architecture fields},
//    "context": "predicted" | "oracle", "answer_cap": 1000,
//    "depends": {"optical": RUN, "sar": RUN, "visual": RUN},
//    "train": {"epochs", "batch_size", "learning_rate", "seed", "patience", "stop_at_train_accuracy"}}
// Relative paths resolve against the working directory.
struct ExperimentConfig {
  std::string name;
  std::filesystem::path dataset;
  Task task = Task::classification;
  vision::VisualModelConfig visual;  // n_classes is filled from the dataset
  PipelineKind pipeline = PipelineKind::end_to_end;
  pipelines::EndToEndConfig end_to_end;
  pipelines::PromptConfig prompt;
  ContextSource context = ContextSource::predicted;
  std::size_t answer_cap = 1000;
  std::map<std::string, std::filesystem::path> depends;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::size_t patience = 0;
  std::optional<double> stop_at_train_accuracy;

  /// Human-readable model label used in reports.
  std::string model_label() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);

}  // namespace rsvqa::runner
