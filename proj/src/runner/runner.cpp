#include "rsvqa/runner/runner.hpp"

#include <chrono>
#include <ctime>
#include <memory>

#include "rsvqa/common/errors.hpp"
#include "rsvqa/common/random.hpp"
#include "rsvqa/nn/checkpoint.hpp"
#include "rsvqa/pipelines/training.hpp"
#include "rsvqa/vision/train.hpp"

namespace rsvqa::runner {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kCheckpoint = "checkpoint.bin";
constexpr const char* kStageOne = "stage1.bin";
constexpr std::size_t kConfusionRows = 20;

json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + " is not valid JSON: " + e.what());
  }
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

fs::path fresh_run_dir(const fs::path& root, const std::string& config_hash) {
  const auto base = utc_timestamp() + "_" + config_hash.substr(0, 12);
  fs::path dir = root / base;
  for (int k = 2; fs::exists(dir); ++k) dir = root / (base + "-" + std::to_string(k));
  return dir;
}

fs::path require_stage(const std::map<std::string, fs::path>& depends, const std::string& stage,
                       const std::string& description, const std::string& consumer) {
  const auto it = depends.find(stage);
  if (it == depends.end()) {
    throw StagingError("missing stage '" + stage + "': " + consumer + " needs " + description +
                       "; train it first and pass it via depends." + stage);
  }
  const auto checkpoint = resolve_checkpoint(it->second);
  if (!fs::is_regular_file(checkpoint)) {
    throw StagingError("missing stage '" + stage + "': no checkpoint at " + checkpoint.string() + " (" + consumer +
                       " needs " + description + ")");
  }
  return checkpoint;
}

void check_dataset(const nn::Checkpoint& checkpoint, const fs::path& path, const std::string& dataset_hash) {
  const auto recorded = checkpoint.header.value("dataset_hash", std::string{});
  if (!recorded.empty() && recorded != dataset_hash) {
    throw DataError(path.string() + " was trained on a different dataset");
  }
}

vision::VisualModel load_stage(const fs::path& checkpoint_path, const std::string& dataset_hash) {
  const auto checkpoint = nn::load_checkpoint(checkpoint_path);
  check_dataset(checkpoint, checkpoint_path, dataset_hash);
  if (!checkpoint.header.contains("visual_model")) {
    throw StagingError(checkpoint_path.string() + " does not hold a trained visual model");
  }
  return vision::load_visual_model(checkpoint_path);
}

std::vector<const corpus::PatchRecord*> pointers(const std::vector<corpus::PatchRecord>& patches, std::size_t begin,
                                                 std::size_t end) {
  std::vector<const corpus::PatchRecord*> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(&patches[i]);
  return out;
}

std::map<std::string, std::vector<double>> visual_features(const vision::VisualModel& model,
                                                           const std::vector<corpus::PatchRecord>& patches) {
  nn::NoGradGuard guard;
  std::map<std::string, std::vector<double>> out;
  constexpr std::size_t kBatch = 64;
  for (std::size_t b = 0; b < patches.size(); b += kBatch) {
    const auto batch = pointers(patches, b, std::min(patches.size(), b + kBatch));
    const auto f = model.features(batch);
    const auto width = f.dim(1);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      out[batch[i]->patch_id] = std::vector<double>(f.values().begin() + static_cast<std::ptrdiff_t>(i * width),
                                                    f.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * width));
    }
  }
  return out;
}

std::vector<corpus::ClassId> present(std::span<const std::uint8_t> labels) {
  std::vector<corpus::ClassId> ids;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j]) ids.push_back(j);
  }
  return ids;
}

std::map<std::string, std::string> contexts(const vision::VisualModel* classifier, const corpus::ClassTaxonomy& taxonomy,
                                            const std::vector<corpus::PatchRecord>& patches) {
  std::map<std::string, std::string> out;
  if (classifier == nullptr) {
    for (const auto& p : patches) out[p.patch_id] = pipelines::build_context(present(p.labels), taxonomy);
    return out;
  }
  const auto predicted = vision::predict_classes(*classifier, patches);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    out[patches[i].patch_id] = pipelines::build_context(present(predicted[i]), taxonomy);
  }
  return out;
}

std::vector<std::string> token_corpus(const Dataset& dataset) {
  std::vector<std::string> texts;
  for (const auto& q : dataset.split_questions(corpus::Split::train)) texts.push_back(q.question);
  for (const auto& c : dataset.taxonomy.classes()) texts.push_back(c.name);
  return texts;
}

struct VqaBundle {
  std::unique_ptr<pipelines::VqaModel> model;
  pipelines::TokenVocabulary tokens;
  pipelines::AnswerVocabulary answers;
  std::optional<vision::VisualModel> stage_one;
};

std::vector<pipelines::VqaSample> vqa_samples(const ExperimentConfig& config, const VqaBundle& bundle,
                                              const Dataset& dataset, corpus::Split split) {
  const auto& patches = dataset.split_patches(split);
  const auto& questions = dataset.split_questions(split);
  if (config.pipeline == PipelineKind::end_to_end) {
    return pipelines::make_end_to_end_samples(questions, visual_features(*bundle.stage_one, patches), bundle.tokens,
                                              bundle.answers);
  }
  const auto* classifier = bundle.stage_one ? &*bundle.stage_one : nullptr;
  return pipelines::make_prompt_samples(questions, contexts(classifier, dataset.taxonomy, patches), bundle.tokens,
                                        bundle.answers, config.prompt.max_len);
}

std::unique_ptr<pipelines::VqaModel> make_vqa_model(const ExperimentConfig& config, std::size_t visual_width,
                                                    std::size_t token_vocab, std::size_t answer_vocab, Rng& rng) {
  if (config.pipeline == PipelineKind::end_to_end) {
    return std::make_unique<pipelines::EndToEndModel>(config.end_to_end, visual_width, token_vocab, answer_vocab, rng);
  }
  return std::make_unique<pipelines::PromptModel>(config.prompt, token_vocab, answer_vocab, rng);
}

bool needs_stage_one(const ExperimentConfig& config) {
  return config.pipeline == PipelineKind::end_to_end || config.context == ContextSource::predicted;
}

struct LoadedRun {
  ExperimentConfig config;
  json meta;
  Dataset dataset;
};

LoadedRun load_run(const fs::path& run_dir) {
  if (!fs::is_regular_file(run_dir / "run.json") || !fs::is_regular_file(run_dir / kCheckpoint)) {
    throw StagingError("missing stage 'train': " + run_dir.string() + " holds no trained run");
  }
  LoadedRun run;
  run.config = experiment_config_from_json(parse_json_file(run_dir / "config.json"));
  run.meta = parse_json_file(run_dir / "run.json");
  run.dataset = load_dataset(run.meta.at("dataset").get<std::string>());
  if (run.dataset.hash != run.meta.at("dataset_hash").get<std::string>()) {
    throw DataError("dataset changed since run " + run_dir.string() + " was trained");
  }
  return run;
}

void write_json(const fs::path& path, const ordered_json& j) { write_file(path, j.dump(2) + "\n"); }

}  // namespace

fs::path resolve_checkpoint(const fs::path& path) {
  return fs::is_directory(path) ? path / kCheckpoint : path;
}

RunArtifact train_run(const TrainRequest& request) {
  const auto config_bytes = read_file(request.config_path);
  json doc;
  try {
    doc = json::parse(config_bytes);
  } catch (const json::exception& e) {
    throw ConfigError(request.config_path.string() + " is not valid JSON: " + e.what());
  }
  auto config = experiment_config_from_json(doc);
  if (request.seed) config.seed = *request.seed;
  for (const auto& [stage, path] : request.depends) config.depends[stage] = path;

  std::string hash_input = config_bytes;
  if (request.seed) hash_input += "\nseed=" + std::to_string(*request.seed);
  for (const auto& [stage, path] : request.depends) hash_input += "\ndepends." + stage + "=" + path.string();
  RunArtifact artifact;
  artifact.config_hash = sha256_hex(hash_input);

  const auto dataset = load_dataset(config.dataset);
  artifact.dataset_hash = dataset.hash;
  const auto& train_patches = dataset.split_patches(corpus::Split::train);
  const auto& val_patches = dataset.split_patches(corpus::Split::val);
  if (train_patches.empty()) throw DataError("dataset has an empty training split");

  ordered_json depends_meta = ordered_json::object();
  auto record_dependency = [&](const std::string& stage, const fs::path& checkpoint) {
    depends_meta[stage] = {{"checkpoint", fs::absolute(checkpoint).lexically_normal().string()},
                           {"sha256", sha256_hex(read_file(checkpoint))}};
  };

  Rng init(derive_seed(config.seed, "init"));
  json header;
  header["dataset_hash"] = dataset.hash;
  header["model_label"] = config.model_label();
  std::optional<fs::path> stage_one_source;

  std::unique_ptr<vision::VisualModel> visual;
  VqaBundle bundle;
  if (config.task == Task::classification) {
    auto vc = config.visual;
    vc.n_classes = dataset.taxonomy.size();
    try {
      vc.validate();
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what());
    }
    visual = std::make_unique<vision::VisualModel>(vc, init);
    if (vision::needs_single_modality_models(vc.kind)) {
      const auto consumer = vision::to_string(vc.kind) + " fusion";
      const auto optical_path = require_stage(config.depends, "optical", "a trained optical_only classifier", consumer);
      const auto sar_path = require_stage(config.depends, "sar", "a trained sar_only classifier", consumer);
      const auto optical = load_stage(optical_path, dataset.hash);
      const auto sar = load_stage(sar_path, dataset.hash);
      visual->initialize_from(optical, sar);
      record_dependency("optical", optical_path);
      record_dependency("sar", sar_path);
    }
  } else {
    if (needs_stage_one(config)) {
      const auto consumer = to_string(config.pipeline) + " pipeline";
      const auto description = config.pipeline == PipelineKind::end_to_end
                                   ? std::string("a trained visual model to encode images")
                                   : std::string("a trained stage-1 classifier to predict the context");
      const auto path = require_stage(config.depends, "visual", description, consumer);
      bundle.stage_one = load_stage(path, dataset.hash);
      if (config.pipeline == PipelineKind::end_to_end && bundle.stage_one->kind() == vision::FusionKind::late) {
        throw ConfigError("the end-to-end pipeline needs visual features; a late-fusion model only yields class scores");
      }
      record_dependency("visual", path);
      stage_one_source = path;
    }
    const auto& train_questions = dataset.split_questions(corpus::Split::train);
    if (train_questions.empty()) throw DataError("dataset has no training questions");
    bundle.answers = pipelines::AnswerVocabulary::build(train_questions, config.answer_cap);
    bundle.tokens = pipelines::TokenVocabulary::build(token_corpus(dataset));
    const std::size_t visual_width =
        config.pipeline == PipelineKind::end_to_end ? bundle.stage_one->feature_size() : 0;
    bundle.model = make_vqa_model(config, visual_width, bundle.tokens.size(), bundle.answers.size(), init);
  }

  const fs::path dir = request.run_dir ? *request.run_dir : fresh_run_dir(request.runs_root, artifact.config_hash);
  if (fs::exists(dir) && !fs::is_empty(dir)) throw DataError("run directory " + dir.string() + " is not empty");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  artifact.dir = dir;
  artifact.checkpoint = dir / kCheckpoint;
  write_file(dir / "config.json", config_bytes);

  if (visual) {
    vision::TrainOptions options;
    options.epochs = config.epochs;
    options.batch_size = config.batch_size;
    options.learning_rate = config.learning_rate;
    options.seed = config.seed;
    options.patience = config.patience;
    artifact.log = vision::train_visual_model(*visual, train_patches, val_patches, options, request.on_epoch);
    vision::save_visual_model(artifact.checkpoint, *visual, header);
  } else {
    const auto train = vqa_samples(config, bundle, dataset, corpus::Split::train);
    const auto val = vqa_samples(config, bundle, dataset, corpus::Split::val);
    pipelines::VqaTrainOptions options;
    options.epochs = config.epochs;
    options.batch_size = config.batch_size;
    options.learning_rate = config.learning_rate;
    options.seed = config.seed;
    options.patience = config.patience;
    options.stop_at_train_accuracy = config.stop_at_train_accuracy;
    options.track_train_accuracy = config.stop_at_train_accuracy.has_value();
    artifact.log = pipelines::train_vqa_model(*bundle.model, train, val, options, request.on_epoch);
    header["vqa_model"] = {{"pipeline", to_string(config.pipeline)},
                           {"context", to_string(config.context)},
                           {"config", bundle.model->config_json()}};
    header["token_vocab"] = bundle.tokens.to_json();
    header["answer_vocab"] = bundle.answers.to_json();
    nn::save_checkpoint(artifact.checkpoint, nn::Checkpoint::capture(header, bundle.model->parameters()));
    if (stage_one_source) fs::copy_file(*stage_one_source, dir / kStageOne);
  }
  write_json(dir / "training_log.json", artifact.log.to_json());
  artifact.checkpoint_hash = sha256_hex(read_file(artifact.checkpoint));

  ordered_json meta;
  meta["model"] = config.model_label();
  meta["task"] = to_string(config.task);
  meta["config_hash"] = artifact.config_hash;
  meta["dataset"] = fs::absolute(config.dataset).lexically_normal().string();
  meta["dataset_hash"] = dataset.hash;
  meta["seed"] = config.seed;
  meta["depends"] = depends_meta;
  meta["checkpoint_sha256"] = artifact.checkpoint_hash;
  meta["epochs_run"] = artifact.log.epochs.size();
  meta["best_epoch"] = artifact.log.best_epoch;
  write_json(dir / "run.json", meta);
  return artifact;
}

eval::MetricsReport evaluate_run(const EvaluateRequest& request) {
  auto run = load_run(request.run_dir);
  const auto& config = run.config;
  const auto split = request.split;
  const auto& patches = run.dataset.split_patches(split);
  if (patches.empty()) throw DataError("split '" + corpus::to_string(split) + "' is empty");
  const fs::path out = request.out_dir ? *request.out_dir : request.run_dir;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create " + out.string() + ": " + ec.message());

  eval::MetricsReport report;
  report.model = config.model_label();
  report.split = corpus::to_string(split);
  report.dataset_hash = run.dataset.hash;
  const auto& taxonomy = run.dataset.taxonomy;
  auto checkpoint_path = request.run_dir / kCheckpoint;

  if (config.task == Task::classification) {
    const auto model = vision::load_visual_model(checkpoint_path);
    const auto predicted = vision::predict_classes(model, patches);
    eval::BinaryMatrix gold;
    std::string dump;
    for (std::size_t i = 0; i < patches.size(); ++i) {
      gold.push_back(patches[i].labels);
      ordered_json line;
      line["patch_id"] = patches[i].patch_id;
      line["gold"] = ordered_json::array();
      line["predicted"] = ordered_json::array();
      for (auto id : present(patches[i].labels)) line["gold"].push_back(taxonomy.at(id).name);
      for (auto id : present(predicted[i])) line["predicted"].push_back(taxonomy.at(id).name);
      dump += line.dump() + "\n";
    }
    report.classification = eval::classification_metrics(predicted, gold);
    write_file(out / "class_predictions.jsonl", dump);
  } else {
    const auto checkpoint = nn::load_checkpoint(checkpoint_path);
    VqaBundle bundle;
    bundle.tokens = pipelines::TokenVocabulary::from_json(checkpoint.header.at("token_vocab"));
    bundle.answers = pipelines::AnswerVocabulary::from_json(checkpoint.header.at("answer_vocab"));
    if (needs_stage_one(config)) {
      if (!fs::is_regular_file(request.run_dir / kStageOne)) {
        throw StagingError("missing stage 'visual': " + request.run_dir.string() + " has no stage1.bin");
      }
      bundle.stage_one = vision::load_visual_model(request.run_dir / kStageOne);
    }
    Rng unused(0);
    const auto& model_json = checkpoint.header.at("vqa_model").at("config");
    const std::size_t visual_width = model_json.value("visual_width", std::size_t{0});
    bundle.model = make_vqa_model(config, visual_width, bundle.tokens.size(), bundle.answers.size(), unused);
    checkpoint.restore(bundle.model->parameters());

    const auto samples = vqa_samples(config, bundle, run.dataset, split);
    if (samples.empty()) throw DataError("split '" + corpus::to_string(split) + "' has no questions");
    const auto predictions = pipelines::predict(*bundle.model, samples, bundle.answers);
    eval::write_predictions(out / "predictions.jsonl", predictions);
    report.vqa = eval::vqa_accuracy(predictions);

    std::map<std::string, std::size_t> all;
    std::map<std::string, std::map<std::string, std::size_t>> by_type;
    for (const auto& s : samples) {
      ++all[s.answer];
      ++by_type[corpus::to_string(s.qtype)][s.answer];
    }
    if (all.size() >= 2) report.bias = eval::bias_scores(all);
    for (const auto& [type, counts] : by_type) {
      if (counts.size() >= 2) report.bias_by_type[type] = eval::bias_scores(counts);
    }
    const auto& vocab = bundle.answers.answers();
    report.confusion = eval::confusion_matrix(predictions, vocab, std::min(kConfusionRows, vocab.size()));
    write_file(out / "confusion.csv", report.confusion->to_csv());
    write_file(out / "confusion_normalized.csv", report.confusion->to_csv(report.confusion->row_normalized()));
    write_file(out / "confusion_log.csv", report.confusion->to_csv(report.confusion->log_scaled()));

    if (config.pipeline == PipelineKind::prompt && bundle.stage_one) {
      eval::BinaryMatrix gold;
      for (const auto& p : patches) gold.push_back(p.labels);
      report.classification = eval::classification_metrics(vision::predict_classes(*bundle.stage_one, patches), gold);
    }
  }
  write_json(out / "metrics.json", report.to_json());
  return report;
}

eval::MetricsReport load_report(const fs::path& path) {
  const auto file = fs::is_directory(path) ? path / "metrics.json" : path;
  if (!fs::is_regular_file(file)) throw DataError("no metrics report at " + file.string() + "; run evaluate first");
  try {
    return eval::MetricsReport::from_json(parse_json_file(file));
  } catch (const json::exception& e) {
    throw DataError(file.string() + " is not a metrics report: " + e.what());
  }
}

}  // namespace rsvqa::runner
