#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "rsvqa/corpus/records.hpp"

namespace rsvqa::eval {

/// Row-major binary label matrix [Q][n_c]. Entries must be 0 or 1.
using BinaryMatrix = std::vector<std::vector<std::uint8_t>>;

/// Per-class confusion counts over a set of samples. Counts from disjoint
/// shards merge by addition, in any order.
struct ConfusionCounts {
  std::vector<std::uint64_t> tp, fp, fn, tn;
  std::uint64_t samples = 0;

  explicit ConfusionCounts(std::size_t n_classes = 0);
  static ConfusionCounts count(const BinaryMatrix& pred, const BinaryMatrix& gold);

  std::size_t n_classes() const { return tp.size(); }
  void add(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gold);
  void merge(const ConfusionCounts& other);
  bool operator==(const ConfusionCounts&) const = default;
};

struct F1Scores {
  double micro = 0.0;
  double average = 0.0;  // weighted by gold positives per class
  std::vector<double> per_class;
};

F1Scores f1_scores(const ConfusionCounts& counts);
F1Scores f1_scores(const BinaryMatrix& pred, const BinaryMatrix& gold);

double match_ratio(const BinaryMatrix& pred, const BinaryMatrix& gold);
/// Mean number of mismatching class bits per sample.
double hamming_distance(const BinaryMatrix& pred, const BinaryMatrix& gold);

struct ClassificationMetrics {
  double hd = 0.0;
  double mr = 0.0;
  double f1_micro = 0.0;
  double f1_average = 0.0;
  std::vector<double> per_class_f1;
};

/// Streaming version of the multi-label metrics, mergeable across shards.
class ClassificationAccumulator {
 public:
  explicit ClassificationAccumulator(std::size_t n_classes = 0) : counts_(n_classes) {}

  void add(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gold);
  void merge(const ClassificationAccumulator& other);
  ClassificationMetrics result() const;
  std::uint64_t samples() const { return counts_.samples; }
  const ConfusionCounts& counts() const { return counts_; }

 private:
  ConfusionCounts counts_;
  std::uint64_t exact_ = 0;
  std::uint64_t mismatches_ = 0;
};

ClassificationMetrics classification_metrics(const BinaryMatrix& pred, const BinaryMatrix& gold);

/// One answered question. `correct` is stored rather than recomputed so that
/// out-of-vocabulary gold answers stay incorrect whatever was predicted.
struct PredictionRecord {
  std::string patch_id;
  std::string question;
  corpus::QuestionType qtype = corpus::QuestionType::yes_no;
  std::string gold;
  std::string predicted;
  bool correct = false;

  bool operator==(const PredictionRecord&) const = default;
};

void write_predictions(const std::filesystem::path& path, std::span<const PredictionRecord> records);
std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path);

/// Accuracy per question type; a subset with no records is reported as
/// nullopt and drops out of the overall figure.
struct VqaAccuracy {
  std::optional<double> yes_no;
  std::optional<double> land_cover;
  std::optional<double> overall;
  std::size_t n_yes_no = 0;
  std::size_t n_land_cover = 0;
  std::size_t correct_yes_no = 0;
  std::size_t correct_land_cover = 0;

  void add(const PredictionRecord& record);
  void merge(const VqaAccuracy& other);
  void finalize();
};

VqaAccuracy vqa_accuracy(std::span<const PredictionRecord> records);

struct BiasScores {
  double uniform = 0.0;
  double prior = 0.0;
  double lb_score = 0.0;
  std::size_t unique_answers = 0;
  std::size_t total = 0;
};

/// (prior - uniform) / (1 - uniform). Throws when uniform == 1.
double lb_score(double prior, double uniform);
/// Requires at least two distinct answers, all counts positive.
BiasScores bias_scores(const std::map<std::string, std::size_t>& answer_counts);
nlohmann::ordered_json to_json(const BiasScores& b);

/// Gold-by-predicted answer counts restricted to the `top_k` most frequent gold
/// answers (ties in vocabulary order). Predictions outside those rows land in a
/// trailing "<other>" column.
struct AnswerConfusion {
  std::vector<std::string> labels;
  std::vector<std::vector<std::uint64_t>> counts;  // [k][k+1]

  std::vector<std::vector<double>> row_normalized() const;
  std::vector<std::vector<double>> log_scaled() const;  // log10(1 + count)
  std::string to_csv() const;
  std::string to_csv(const std::vector<std::vector<double>>& values) const;
};

inline constexpr const char* kOtherAnswer = "<other>";

AnswerConfusion confusion_matrix(std::span<const PredictionRecord> records,
                                 std::span<const std::string> vocabulary, std::size_t top_k);

/// Everything a run reports, serialized as one JSON document. Sections that do
/// not apply to a model are absent.
struct MetricsReport {
  std::string model;
  std::string split;
  std::string dataset_hash;
  std::optional<ClassificationMetrics> classification;
  std::optional<VqaAccuracy> vqa;
  std::optional<BiasScores> bias;
  std::map<std::string, BiasScores> bias_by_type;
  std::optional<AnswerConfusion> confusion;

  nlohmann::ordered_json to_json() const;
  static MetricsReport from_json(const nlohmann::json& doc);
};

}  // namespace rsvqa::eval
