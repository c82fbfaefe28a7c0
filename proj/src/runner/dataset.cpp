#include "rsvqa/runner/dataset.hpp"

#include <algorithm>
#include <map>

#include "rsvqa/common/errors.hpp"
#include "rsvqa/common/random.hpp"
#include "rsvqa/corpus/manifest.hpp"
#include "rsvqa/corpus/questions.hpp"
#include "rsvqa/corpus/scene.hpp"
#include "rsvqa/corpus/split.hpp"
#include "rsvqa/eval/metrics.hpp"

namespace rsvqa::runner {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

fs::path patches_file(corpus::Split s) { return "patches_" + corpus::to_string(s) + ".jsonl"; }
fs::path qa_file(corpus::Split s) { return "qa_" + corpus::to_string(s) + ".jsonl"; }

ordered_json bias_section(const std::vector<corpus::QARecord>& questions) {
  std::map<std::string, std::size_t> all;
  std::map<std::string, std::map<std::string, std::size_t>> by_type;
  for (const auto& q : questions) {
    ++all[q.answer];
    ++by_type[corpus::to_string(q.qtype)][q.answer];
  }
  auto scores = [](const std::map<std::string, std::size_t>& counts) {
    return counts.size() >= 2 ? eval::to_json(eval::bias_scores(counts)) : ordered_json(nullptr);
  };
  ordered_json out = scores(all);
  if (out.is_null()) out = ordered_json::object();
  for (const auto& [type, counts] : by_type) out["by_type"][type] = scores(counts);
  return out;
}

std::vector<corpus::PatchRecord> source_patches(const DatasetConfig& config, corpus::ClassTaxonomy& taxonomy) {
  if (config.source == DatasetSource::synthetic) {
    taxonomy = corpus::scene_taxonomy(config.scene);
    return corpus::synthesize_corpus(config.scene, config.patches, config.seed);
  }
  taxonomy = config.taxonomy == "clc61" ? corpus::ClassTaxonomy::clc61() : corpus::load_taxonomy(config.taxonomy);
  auto patches = corpus::load_manifest(config.manifest, taxonomy.size());
  if (patches.empty()) throw DataError("manifest " + config.manifest.string() + " lists no patches");
  return patches;
}

}  // namespace

ordered_json dataset_statistics(const corpus::ClassTaxonomy& taxonomy, const std::vector<corpus::PatchRecord>& patches,
                                const std::vector<corpus::QARecord>& questions) {
  ordered_json stats;
  stats["patches"] = patches.size();
  stats["questions"] = questions.size();
  std::size_t yes_no = 0;
  for (const auto& q : questions) yes_no += q.qtype == corpus::QuestionType::yes_no;
  stats["yes_no_fraction"] = questions.empty() ? 0.0 : static_cast<double>(yes_no) / static_cast<double>(questions.size());
  ordered_json freq = ordered_json::object();
  for (std::size_t j = 0; j < taxonomy.size(); ++j) {
    std::size_t n = 0;
    for (const auto& p : patches) n += p.labels.at(j);
    freq[taxonomy.at(j).name] = patches.empty() ? 0.0 : static_cast<double>(n) / static_cast<double>(patches.size());
  }
  stats["class_frequency"] = freq;
  std::map<std::string, std::size_t> answers;
  for (const auto& q : questions) ++answers[q.answer];
  std::vector<std::pair<std::string, std::size_t>> ranked(answers.begin(), answers.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  ordered_json dist = ordered_json::array();
  for (const auto& [answer, n] : ranked) dist.push_back({{"answer", answer}, {"count", n}});
  stats["unique_answers"] = answers.size();
  stats["answer_distribution"] = dist;
  stats["bias"] = bias_section(questions);
  return stats;
}

std::string dataset_content_hash(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() != "dataset.json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::string manifest;
  for (const auto& f : files) {
    manifest += fs::relative(f, dir).generic_string();
    manifest += ' ';
    manifest += sha256_hex(read_file(f));
    manifest += '\n';
  }
  return sha256_hex(manifest);
}

DatasetSummary build_dataset(const DatasetConfig& config, const fs::path& out_dir) {
  config.validate();
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    throw DataError("output directory " + out_dir.string() + " is not empty");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());

  corpus::ClassTaxonomy taxonomy;
  auto patches = source_patches(config, taxonomy);
  const auto splits = corpus::split_by_longitude(patches, config.split);

  DatasetSummary summary;
  summary.dir = out_dir;
  std::array<std::vector<corpus::PatchRecord>, 3> by_split;
  std::array<std::vector<corpus::QARecord>, 3> qa_by_split;
  std::vector<corpus::QARecord> all_questions;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    auto q = corpus::generate_questions(patches[i], taxonomy, static_cast<int>(config.questions_per_patch),
                                        derive_seed(config.seed, "questions:" + patches[i].patch_id), config.mix);
    const auto s = static_cast<std::size_t>(splits[i]);
    for (auto& r : q) r.split = splits[i];
    all_questions.insert(all_questions.end(), q.begin(), q.end());
    qa_by_split[s].insert(qa_by_split[s].end(), q.begin(), q.end());
    by_split[s].push_back(std::move(patches[i]));
  }

  corpus::write_taxonomy(out_dir / "taxonomy.json", taxonomy);
  ordered_json split_stats;
  for (auto s : kSplits) {
    const auto k = static_cast<std::size_t>(s);
    corpus::write_manifest(out_dir / patches_file(s), by_split[k]);
    corpus::write_qa_file(out_dir / qa_file(s), qa_by_split[k]);
    summary.patches[k] = by_split[k].size();
    summary.questions[k] = qa_by_split[k].size();
    split_stats[corpus::to_string(s)] = dataset_statistics(taxonomy, by_split[k], qa_by_split[k]);
  }
  std::vector<corpus::PatchRecord> joined;
  for (auto& v : by_split) joined.insert(joined.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
  summary.stats = dataset_statistics(taxonomy, joined, all_questions);
  summary.stats["splits"] = split_stats;
  write_file(out_dir / "stats.json", summary.stats.dump(2) + "\n");

  summary.hash = dataset_content_hash(out_dir);
  ordered_json meta;
  meta["hash"] = summary.hash;
  meta["source"] = config.source == DatasetSource::synthetic ? "synthetic" : "manifest";
  meta["seed"] = config.seed;
  meta["questions_per_patch"] = config.questions_per_patch;
  meta["classes"] = taxonomy.size();
  const auto& bounds = config.source == DatasetSource::synthetic ? config.scene.sar_bounds : corpus::SarClipBounds{};
  meta["sar_bounds"] = {{"vv", {bounds.vv.min_db, bounds.vv.max_db}}, {"vh", {bounds.vh.min_db, bounds.vh.max_db}}};
  for (auto s : kSplits) {
    const auto k = static_cast<std::size_t>(s);
    meta["patches"][corpus::to_string(s)] = summary.patches[k];
    meta["questions"][corpus::to_string(s)] = summary.questions[k];
  }
  write_file(out_dir / "dataset.json", meta.dump(2) + "\n");
  return summary;
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_regular_file(dir / "dataset.json")) {
    throw DataError(dir.string() + " is not a built dataset (no dataset.json); run build-dataset first");
  }
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(dir / "dataset.json"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("dataset.json is malformed: " + std::string(e.what()));
  }
  Dataset d;
  d.dir = dir;
  d.hash = dataset_content_hash(dir);
  if (meta.value("hash", std::string{}) != d.hash) {
    throw DataError("dataset " + dir.string() + " changed after it was built (content hash mismatch)");
  }
  d.taxonomy = corpus::load_taxonomy(dir / "taxonomy.json");
  corpus::SarClipBounds bounds;
  if (meta.contains("sar_bounds")) {
    const auto& b = meta["sar_bounds"];
    bounds.vv = {b["vv"][0].get<double>(), b["vv"][1].get<double>()};
    bounds.vh = {b["vh"][0].get<double>(), b["vh"][1].get<double>()};
  }
  for (auto s : kSplits) {
    const auto k = static_cast<std::size_t>(s);
    d.patches[k] = corpus::load_manifest(dir / patches_file(s), d.taxonomy.size(), bounds);
    d.questions[k] = corpus::load_qa_file(dir / qa_file(s));
  }
  return d;
}

}  // namespace rsvqa::runner
