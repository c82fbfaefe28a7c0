#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "rsvqa/corpus/records.hpp"
#include "rsvqa/corpus/taxonomy.hpp"
#include "rsvqa/runner/config.hpp"

namespace rsvqa::runner {

// A built dataset directory holds
//   dataset.json                  config echo, counts and content hash
//   taxonomy.json
//   patches_{train,val,test}.jsonl + images/
//   qa_{train,val,test}.jsonl
//   stats.json                    class frequencies, answer distribution, bias scores

inline constexpr std::array<corpus::Split, 3> kSplits{corpus::Split::train, corpus::Split::val, corpus::Split::test};

struct DatasetSummary {
  std::filesystem::path dir;
  std::string hash;
  std::array<std::size_t, 3> patches{};
  std::array<std::size_t, 3> questions{};
  nlohmann::ordered_json stats;
};

/// Writes the dataset into `out_dir`, which must be empty or absent. Output is
/// a pure function of the config.
DatasetSummary build_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir);

/// SHA-256 over every file under `dir` except dataset.json, in path order.
std::string dataset_content_hash(const std::filesystem::path& dir);

struct Dataset {
  std::filesystem::path dir;
  std::string hash;
  corpus::ClassTaxonomy taxonomy;
  std::array<std::vector<corpus::PatchRecord>, 3> patches;
  std::array<std::vector<corpus::QARecord>, 3> questions;

  const std::vector<corpus::PatchRecord>& split_patches(corpus::Split s) const {
    return patches[static_cast<std::size_t>(s)];
  }
  const std::vector<corpus::QARecord>& split_questions(corpus::Split s) const {
    return questions[static_cast<std::size_t>(s)];
  }
};

/// Loads a built dataset and checks its content against the recorded hash.
Dataset load_dataset(const std::filesystem::path& dir);

/// Class frequencies, answer distribution and bias scores of a question set.
nlohmann::ordered_json dataset_statistics(const corpus::ClassTaxonomy& taxonomy,
                                          const std::vector<corpus::PatchRecord>& patches,
                                          const std::vector<corpus::QARecord>& questions);

}  // namespace rsvqa::runner
