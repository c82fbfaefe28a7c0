#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "rsvqa/common/errors.hpp"
#include "rsvqa/runner/runner.hpp"

namespace fs = std::filesystem;
using namespace rsvqa;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kStaging = 2, kData = 3 };

nlohmann::json read_config(const fs::path& path) {
  try {
    return nlohmann::json::parse(runner::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + " is not valid JSON: " + e.what());
  }
}

void print_epoch(const vision::EpochRecord& e) {
  std::printf("epoch %3zu  train_loss %.4f", e.epoch, e.train_loss);
  if (e.train_metric) std::printf("  train_metric %.4f", *e.train_metric);
  if (e.val_loss) std::printf("  val_loss %.4f", *e.val_loss);
  if (e.val_metric) std::printf("  val_metric %.4f", *e.val_metric);
  std::printf("\n");
  std::fflush(stdout);
}

int build_dataset(const fs::path& config_path, const fs::path& out, std::optional<std::uint64_t> seed) {
  auto config = runner::dataset_config_from_json(read_config(config_path));
  if (seed) config.seed = *seed;
  const auto summary = runner::build_dataset(config, out);
  std::size_t total = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    std::printf("%-5s  %6zu patches  %8zu questions\n", corpus::to_string(runner::kSplits[k]).c_str(),
                summary.patches[k], summary.questions[k]);
    total += summary.questions[k];
  }
  std::printf("total  %zu questions, %zu unique answers\n", total, summary.stats["unique_answers"].get<std::size_t>());
  if (summary.stats["bias"].contains("lb_score")) {
    std::printf("L_B score %.4f (prior %.4f, uniform %.6f)\n", summary.stats["bias"]["lb_score"].get<double>(),
                summary.stats["bias"]["prior"].get<double>(), summary.stats["bias"]["uniform"].get<double>());
  }
  std::printf("dataset %s\nhash %s\n", out.string().c_str(), summary.hash.c_str());
  return kOk;
}

int compare(const std::vector<std::string>& inputs, const std::optional<fs::path>& csv_out) {
  std::vector<eval::MetricsReport> reports;
  for (const auto& p : inputs) reports.push_back(runner::load_report(p));
  const auto table = runner::compare_reports(reports);
  std::cout << table.text();
  if (csv_out) runner::write_file(*csv_out, table.csv());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal remote-sensing VQA experiment runner"};
  app.require_subcommand(1);

  std::string config_path, out_dir, run_dir, split_name = "test";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> depends, reports;

  auto* build = app.add_subcommand("build-dataset", "Generate or ingest a corpus with QA files and splits");
  build->add_option("--config", config_path, "Dataset config JSON")->required()->check(CLI::ExistingFile);
  build->add_option("--out", out_dir, "Output dataset directory")->required();
  build->add_option("--seed", seed, "Override the dataset seed");

  auto* train = app.add_subcommand("train", "Train one stage and write a run directory");
  train->add_option("--config", config_path, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out_dir, "Runs root (default runs)");
  train->add_option("--run", run_dir, "Exact run directory to create instead of a timestamped one");
  train->add_option("--seed", seed, "Override the training seed");
  train->add_option("--depend", depends, "Prerequisite stage as STAGE=RUN_DIR (optical, sar, visual)");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a trained run on one split");
  evaluate->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--split", split_name, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}));
  evaluate->add_option("--out", out_dir, "Directory for the report (default: the run directory)");

  auto* comp = app.add_subcommand("compare", "Tabulate metrics reports, marking the best value per column");
  comp->add_option("reports", reports, "metrics.json files or run directories")->required();
  comp->add_option("--out", out_dir, "Write the table as CSV to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*build) return build_dataset(config_path, out_dir, seed);
    if (*train) {
      runner::TrainRequest request;
      request.config_path = config_path;
      if (!out_dir.empty()) request.runs_root = out_dir;
      if (!run_dir.empty()) request.run_dir = fs::path(run_dir);
      request.seed = seed;
      for (const auto& d : depends) {
        const auto eq = d.find('=');
        if (eq == std::string::npos || eq == 0) throw InvalidInput("--depend expects STAGE=PATH, got '" + d + "'");
        request.depends[d.substr(0, eq)] = d.substr(eq + 1);
      }
      request.on_epoch = print_epoch;
      const auto artifact = runner::train_run(request);
      std::printf("run %s\ncheckpoint sha256 %s\n", artifact.dir.string().c_str(), artifact.checkpoint_hash.c_str());
      return kOk;
    }
    if (*evaluate) {
      runner::EvaluateRequest request;
      request.run_dir = run_dir;
      request.split = corpus::split_from_string(split_name);
      if (!out_dir.empty()) request.out_dir = fs::path(out_dir);
      const auto report = runner::evaluate_run(request);
      std::cout << report.to_json().dump(2) << "\n";
      return kOk;
    }
    if (*comp) return compare(reports, out_dir.empty() ? std::nullopt : std::optional<fs::path>(out_dir));
  } catch (const StagingError& e) {
    std::cerr << "staging error: " << e.what() << "\n";
    return kStaging;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const InvalidInput& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
