#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rsvqa/eval/metrics.hpp"
#include "rsvqa/runner/config.hpp"
#include "rsvqa/runner/dataset.hpp"

namespace rsvqa::runner {

// A run directory holds
//   config.json        byte copy of the input config
//   run.json           hashes, resolved dependencies and overrides
//   checkpoint.bin     trained model (self-describing)
//   stage1.bin         visual model a VQA pipeline reads images with, if any
//   training_log.json  per-epoch losses and validation metric
// and, after evaluate, metrics.json, predictions.jsonl (or
// class_predictions.jsonl) and the answer confusion CSVs.

struct TrainRequest {
  std::filesystem::path config_path;
  std::filesystem::path runs_root = "runs";
  std::optional<std::uint64_t> seed;
  std::map<std::string, std::filesystem::path> depends;  // overrides config.depends
  std::optional<std::filesystem::path> run_dir;         // instead of runs_root/<timestamp>_<hash>
  vision::EpochCallback on_epoch;
};

struct RunArtifact {
  std::filesystem::path dir;
  std::filesystem::path checkpoint;
  std::string config_hash;
  std::string dataset_hash;
  std::string checkpoint_hash;
  vision::TrainLog log;
};

/// Trains one stage. Missing prerequisite checkpoints raise StagingError
/// naming the stage.
RunArtifact train_run(const TrainRequest& request);

struct EvaluateRequest {
  std::filesystem::path run_dir;
  corpus::Split split = corpus::Split::test;
  std::optional<std::filesystem::path> out_dir;  // defaults to run_dir
};

eval::MetricsReport evaluate_run(const EvaluateRequest& request);

/// Resolves a dependency given as a run directory or a checkpoint file.
std::filesystem::path resolve_checkpoint(const std::filesystem::path& path);

struct ComparisonTable {
  std::vector<std::string> columns;
  std::vector<std::string> models;
  std::vector<std::vector<std::optional<double>>> values;  // [model][column]
  std::vector<std::vector<bool>> best;                      // ties mark every tied row

  std::string text() const;
  std::string csv() const;
};

/// Needs at least two reports on the same dataset and split.
ComparisonTable compare_reports(const std::vector<eval::MetricsReport>& reports);

/// Reads metrics.json from a file path or a run directory.
eval::MetricsReport load_report(const std::filesystem::path& path);

}  // namespace rsvqa::runner
