#include "rsvqa/runner/config.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <sstream>

#include "rsvqa/common/errors.hpp"

namespace rsvqa::runner {

namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T value(const json& j, const std::string& key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

template <typename T>
T required(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + "." + key + " is required");
  return value<T>(j, key, T{}, where);
}

std::vector<std::size_t> id_list(const json& j, const std::string& key, std::size_t n, const std::string& where) {
  auto ids = value<std::vector<std::size_t>>(j, key, {}, where);
  for (auto id : ids) {
    if (id >= n) throw ConfigError(where + "." + key + " names class " + std::to_string(id) + " of " + std::to_string(n));
  }
  return ids;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

corpus::SceneConfig scene_config_from_json(const json& j) {
  const std::string where = "dataset.scene";
  check_keys(j, {"n_classes", "size", "height", "width", "noise_level", "class_frequency", "optical_only", "sar_only",
                 "parents", "sar_bounds"},
             where);
  const auto n = required<std::size_t>(j, "n_classes", where);
  const auto size = value<std::size_t>(j, "size", 32, where);
  auto c = corpus::SceneConfig::uniform(n, 0.3, size);
  c.height = value<std::size_t>(j, "height", c.height, where);
  c.width = value<std::size_t>(j, "width", c.width, where);
  c.noise_level = value<double>(j, "noise_level", c.noise_level, where);
  if (j.contains("class_frequency")) {
    if (j["class_frequency"].is_number()) {
      c.class_frequency.assign(n, j["class_frequency"].get<double>());
    } else {
      c.class_frequency = value<std::vector<double>>(j, "class_frequency", {}, where);
    }
  }
  for (auto id : id_list(j, "optical_only", n, where)) c.visibility[id].sar_visible = false;
  for (auto id : id_list(j, "sar_only", n, where)) {
    if (!c.visibility[id].sar_visible) throw ConfigError(where + ": class " + std::to_string(id) + " is listed twice");
    c.visibility[id].optical_visible = false;
  }
  if (j.contains("parents")) {
    c.parents.clear();
    for (const auto& p : j["parents"]) {
      if (p.is_null()) {
        c.parents.emplace_back();
      } else if (p.is_number_unsigned()) {
        c.parents.emplace_back(p.get<corpus::ClassId>());
      } else {
        throw ConfigError(where + ".parents entries must be class ids or null");
      }
    }
  }
  if (j.contains("sar_bounds")) {
    const auto& b = j["sar_bounds"];
    check_keys(b, {"vv", "vh"}, where + ".sar_bounds");
    auto range = [&](const char* key, corpus::DbRange fallback) {
      auto v = value<std::vector<double>>(b, key, {fallback.min_db, fallback.max_db}, where + ".sar_bounds");
      if (v.size() != 2) throw ConfigError(where + ".sar_bounds." + key + " must be [min_db, max_db]");
      return corpus::DbRange{v[0], v[1]};
    };
    c.sar_bounds.vv = range("vv", c.sar_bounds.vv);
    c.sar_bounds.vh = range("vh", c.sar_bounds.vh);
  }
  try {
    corpus::validate(c);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  return c;
}

void DatasetConfig::validate() const {
  if (questions_per_patch == 0) throw ConfigError("dataset.questions_per_patch must be positive");
  if (source == DatasetSource::synthetic && patches == 0) throw ConfigError("dataset.patches must be positive");
  if (source == DatasetSource::manifest && manifest.empty()) throw ConfigError("dataset.manifest is required");
  for (double f : {split.train, split.val, split.test}) {
    if (!(f >= 0.0)) throw ConfigError("dataset.split fractions must be non-negative");
  }
  try {
    corpus::validate(mix);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
}

namespace {

DatasetConfig parse_dataset(const json& doc) {
  check_keys(doc, {"dataset"}, "dataset config");
  const auto& j = doc.contains("dataset") ? doc["dataset"] : throw ConfigError("config needs a 'dataset' object");
  const std::string where = "dataset";
  check_keys(j, {"source", "scene", "patches", "questions_per_patch", "seed", "split", "mix", "manifest", "taxonomy"},
             where);
  DatasetConfig c;
  const auto source = value<std::string>(j, "source", "synthetic", where);
  if (source == "synthetic") {
    c.source = DatasetSource::synthetic;
    c.scene = scene_config_from_json(j.contains("scene") ? j["scene"] : throw ConfigError("dataset.scene is required"));
  } else if (source == "manifest") {
    c.source = DatasetSource::manifest;
    c.manifest = value<std::string>(j, "manifest", "", where);
    c.taxonomy = value<std::string>(j, "taxonomy", c.taxonomy, where);
  } else {
    throw ConfigError("dataset.source must be 'synthetic' or 'manifest'");
  }
  c.patches = value<std::size_t>(j, "patches", c.patches, where);
  c.questions_per_patch = value<std::size_t>(j, "questions_per_patch", c.questions_per_patch, where);
  c.seed = value<std::uint64_t>(j, "seed", c.seed, where);
  if (j.contains("split")) {
    const auto& s = j["split"];
    check_keys(s, {"train", "val", "test"}, where + ".split");
    c.split.train = value<double>(s, "train", c.split.train, where + ".split");
    c.split.val = value<double>(s, "val", c.split.val, where + ".split");
    c.split.test = value<double>(s, "test", c.split.test, where + ".split");
  }
  if (j.contains("mix")) {
    const auto& m = j["mix"];
    const std::string w = where + ".mix";
    check_keys(m, {"yes_no_fraction", "conjunction_fraction", "double_conjunction_fraction", "and_fraction",
                   "present_term_fraction", "level_query_fraction", "exclusion_fraction"},
               w);
    c.mix.yes_no_fraction = value<double>(m, "yes_no_fraction", c.mix.yes_no_fraction, w);
    c.mix.conjunction_fraction = value<double>(m, "conjunction_fraction", c.mix.conjunction_fraction, w);
    c.mix.double_conjunction_fraction =
        value<double>(m, "double_conjunction_fraction", c.mix.double_conjunction_fraction, w);
    c.mix.and_fraction = value<double>(m, "and_fraction", c.mix.and_fraction, w);
    c.mix.present_term_fraction = value<double>(m, "present_term_fraction", c.mix.present_term_fraction, w);
    c.mix.level_query_fraction = value<double>(m, "level_query_fraction", c.mix.level_query_fraction, w);
    c.mix.exclusion_fraction = value<double>(m, "exclusion_fraction", c.mix.exclusion_fraction, w);
  }
  c.validate();
  return c;
}

}  // namespace

DatasetConfig dataset_config_from_json(const json& doc) {
  try {
    return parse_dataset(doc);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed dataset config: ") + e.what());
  }
}

std::string to_string(Task t) { return t == Task::classification ? "classification" : "vqa"; }
std::string to_string(PipelineKind p) { return p == PipelineKind::end_to_end ? "end_to_end" : "prompt"; }
std::string to_string(ContextSource c) { return c == ContextSource::predicted ? "predicted" : "oracle"; }

std::string ExperimentConfig::model_label() const {
  if (!name.empty()) return name;
  return task == Task::classification ? vision::to_string(visual.kind) : to_string(pipeline);
}

namespace {

ExperimentConfig parse_experiment(const json& doc) {
  check_keys(doc, {"name", "dataset", "task", "model", "context", "answer_cap", "depends", "train"}, "config");
  ExperimentConfig c;
  c.name = value<std::string>(doc, "name", "", "config");
  c.dataset = required<std::string>(doc, "dataset", "config");
  const auto task = value<std::string>(doc, "task", "classification", "config");
  if (task == "classification") {
    c.task = Task::classification;
  } else if (task == "vqa") {
    c.task = Task::vqa;
  } else {
    throw ConfigError("config.task must be 'classification' or 'vqa'");
  }

  const json model = doc.value("model", json::object());
  if (c.task == Task::classification) {
    check_keys(model, {"fusion", "encoder", "threshold"}, "config.model");
    try {
      c.visual.kind = vision::fusion_kind_from_string(value<std::string>(model, "fusion", "optical_only", "config.model"));
      json encoder = model.value("encoder", json::object());
      if (!encoder.contains("in_channels")) encoder["in_channels"] = c.visual.kind == vision::FusionKind::early ? 6 : 3;
      c.visual.encoder = vision::encoder_config_from_json(encoder);
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what());
    }
    c.visual.threshold = value<double>(model, "threshold", c.visual.threshold, "config.model");
    if (!(c.visual.threshold > 0.0 && c.visual.threshold < 1.0)) throw ConfigError("config.model.threshold must lie in (0,1)");
  } else {
    const auto pipeline = value<std::string>(model, "pipeline", "end_to_end", "config.model");
    json rest = model;
    rest.erase("pipeline");
    if (pipeline == "end_to_end") {
      c.pipeline = PipelineKind::end_to_end;
      check_keys(rest, {"embed_width", "question_width", "joint_width", "hidden_width", "dropout"}, "config.model");
      c.end_to_end = pipelines::end_to_end_config_from_json(rest);
    } else if (pipeline == "prompt") {
      c.pipeline = PipelineKind::prompt;
      check_keys(rest, {"width", "heads", "layers", "ff_width", "max_len", "hidden_width", "dropout"}, "config.model");
      c.prompt = pipelines::prompt_config_from_json(rest);
    } else {
      throw ConfigError("config.model.pipeline must be 'end_to_end' or 'prompt'");
    }
    const auto context = value<std::string>(doc, "context", "predicted", "config");
    if (context == "predicted") {
      c.context = ContextSource::predicted;
    } else if (context == "oracle") {
      c.context = ContextSource::oracle;
    } else {
      throw ConfigError("config.context must be 'predicted' or 'oracle'");
    }
    c.answer_cap = value<std::size_t>(doc, "answer_cap", c.answer_cap, "config");
    if (c.answer_cap < 3) throw ConfigError("config.answer_cap must be at least 3");
  }

  if (doc.contains("depends")) {
    check_keys(doc["depends"], {"optical", "sar", "visual"}, "config.depends");
    for (const auto& [stage, path] : doc["depends"].items()) {
      if (!path.is_string()) throw ConfigError("config.depends." + stage + " must be a path");
      c.depends[stage] = path.get<std::string>();
    }
  }

  const json train = doc.value("train", json::object());
  const std::string where = "config.train";
  check_keys(train, {"epochs", "batch_size", "learning_rate", "seed", "patience", "stop_at_train_accuracy"}, where);
  c.epochs = value<std::size_t>(train, "epochs", c.epochs, where);
  c.batch_size = value<std::size_t>(train, "batch_size", c.batch_size, where);
  c.learning_rate = value<double>(train, "learning_rate", c.learning_rate, where);
  c.seed = value<std::uint64_t>(train, "seed", c.seed, where);
  c.patience = value<std::size_t>(train, "patience", c.patience, where);
  if (train.contains("stop_at_train_accuracy")) {
    c.stop_at_train_accuracy = value<double>(train, "stop_at_train_accuracy", 1.0, where);
  }
  if (c.epochs == 0 || c.batch_size == 0 || !(c.learning_rate > 0.0)) {
    throw ConfigError("epochs, batch_size and learning_rate must be positive");
  }
  return c;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& doc) {
  try {
    return parse_experiment(doc);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

}  // namespace rsvqa::runner
