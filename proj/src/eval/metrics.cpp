#include "rsvqa/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "rsvqa/common/errors.hpp"

namespace rsvqa::eval {
namespace {

void check_shapes(const BinaryMatrix& pred, const BinaryMatrix& gold) {
  if (pred.size() != gold.size()) {
    throw InvalidInput("prediction has " + std::to_string(pred.size()) + " rows, gold has " +
                       std::to_string(gold.size()));
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != gold[i].size() || pred[i].size() != pred[0].size()) {
      throw InvalidInput("row " + std::to_string(i) + " has mismatched class count");
    }
  }
}

void check_row(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gold, std::size_t n) {
  if (pred.size() != n || gold.size() != n) {
    throw InvalidInput("expected rows of " + std::to_string(n) + " classes, got " + std::to_string(pred.size()) +
                       " and " + std::to_string(gold.size()));
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (pred[j] > 1 || gold[j] > 1) throw InvalidInput("label matrices must be binary");
  }
}

double f1_from(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  const auto denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
}

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& v) {
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

BiasScores bias_from(const nlohmann::json& j) {
  return {j.at("uniform").get<double>(), j.at("prior").get<double>(), j.at("lb_score").get<double>(),
          j.at("unique_answers").get<std::size_t>(), j.at("total").get<std::size_t>()};
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

template <typename Row>
std::string render_csv(const std::vector<std::string>& labels, const std::vector<Row>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "gold\\predicted";
  for (const auto& l : labels) out << ',' << csv_field(l);
  out << ',' << kOtherAnswer << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << csv_field(labels[i]);
    for (auto v : rows[i]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

}  // namespace

ConfusionCounts::ConfusionCounts(std::size_t n_classes)
    : tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0), tn(n_classes, 0) {}

ConfusionCounts ConfusionCounts::count(const BinaryMatrix& pred, const BinaryMatrix& gold) {
  check_shapes(pred, gold);
  ConfusionCounts counts(pred.empty() ? 0 : pred[0].size());
  for (std::size_t i = 0; i < pred.size(); ++i) counts.add(pred[i], gold[i]);
  return counts;
}

void ConfusionCounts::add(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gold) {
  check_row(pred, gold, n_classes());
  for (std::size_t j = 0; j < n_classes(); ++j) {
    if (pred[j] && gold[j]) ++tp[j];
    else if (pred[j]) ++fp[j];
    else if (gold[j]) ++fn[j];
    else ++tn[j];
  }
  ++samples;
}

void ConfusionCounts::merge(const ConfusionCounts& other) {
  if (samples == 0 && n_classes() == 0) {
    *this = other;
    return;
  }
  if (other.samples == 0 && other.n_classes() == 0) return;
  if (other.n_classes() != n_classes()) throw InvalidInput("cannot merge counts over different class sets");
  for (std::size_t j = 0; j < n_classes(); ++j) {
    tp[j] += other.tp[j];
    fp[j] += other.fp[j];
    fn[j] += other.fn[j];
    tn[j] += other.tn[j];
  }
  samples += other.samples;
}

F1Scores f1_scores(const ConfusionCounts& c) {
  F1Scores out;
  out.per_class.resize(c.n_classes());
  std::uint64_t tp = 0, fp = 0, fn = 0;
  double weighted = 0.0, weight = 0.0;
  for (std::size_t j = 0; j < c.n_classes(); ++j) {
    out.per_class[j] = f1_from(c.tp[j], c.fp[j], c.fn[j]);
    const double w = static_cast<double>(c.tp[j] + c.fn[j]);
    weighted += w * out.per_class[j];
    weight += w;
    tp += c.tp[j];
    fp += c.fp[j];
    fn += c.fn[j];
  }
  out.micro = f1_from(tp, fp, fn);
  out.average = weight > 0.0 ? weighted / weight : 0.0;
  return out;
}

F1Scores f1_scores(const BinaryMatrix& pred, const BinaryMatrix& gold) {
  return f1_scores(ConfusionCounts::count(pred, gold));
}

double match_ratio(const BinaryMatrix& pred, const BinaryMatrix& gold) {
  return classification_metrics(pred, gold).mr;
}

double hamming_distance(const BinaryMatrix& pred, const BinaryMatrix& gold) {
  return classification_metrics(pred, gold).hd;
}

void ClassificationAccumulator::add(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gold) {
  if (counts_.n_classes() == 0 && counts_.samples == 0) counts_ = ConfusionCounts(pred.size());
  counts_.add(pred, gold);
  std::uint64_t diff = 0;
  for (std::size_t j = 0; j < pred.size(); ++j) diff += pred[j] != gold[j];
  mismatches_ += diff;
  exact_ += diff == 0;
}

void ClassificationAccumulator::merge(const ClassificationAccumulator& other) {
  counts_.merge(other.counts_);
  exact_ += other.exact_;
  mismatches_ += other.mismatches_;
}

ClassificationMetrics ClassificationAccumulator::result() const {
  if (counts_.samples == 0) throw InvalidInput("classification metrics need at least one sample");
  ClassificationMetrics m;
  const auto q = static_cast<double>(counts_.samples);
  m.hd = static_cast<double>(mismatches_) / q;
  m.mr = static_cast<double>(exact_) / q;
  auto f1 = f1_scores(counts_);
  m.f1_micro = f1.micro;
  m.f1_average = f1.average;
  m.per_class_f1 = std::move(f1.per_class);
  return m;
}

ClassificationMetrics classification_metrics(const BinaryMatrix& pred, const BinaryMatrix& gold) {
  check_shapes(pred, gold);
  ClassificationAccumulator acc(pred.empty() ? 0 : pred[0].size());
  for (std::size_t i = 0; i < pred.size(); ++i) acc.add(pred[i], gold[i]);
  return acc.result();
}

void write_predictions(const std::filesystem::path& path, std::span<const PredictionRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : records) {
    nlohmann::ordered_json j{{"patch_id", r.patch_id}, {"question", r.question},
                             {"qtype", corpus::to_string(r.qtype)}, {"gold", r.gold},
                             {"predicted", r.predicted}, {"correct", r.correct}};
    out << j.dump() << '\n';
  }
}

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("patch_id").get<std::string>(), j.at("question").get<std::string>(),
                     corpus::question_type_from_string(j.at("qtype").get<std::string>()),
                     j.at("gold").get<std::string>(), j.at("predicted").get<std::string>(),
                     j.at("correct").get<bool>()});
    } catch (const std::exception& e) {
      throw ParseError(path.string(), n, e.what());
    }
  }
  return out;
}

void VqaAccuracy::add(const PredictionRecord& r) {
  if (r.qtype == corpus::QuestionType::yes_no) {
    ++n_yes_no;
    correct_yes_no += r.correct;
  } else {
    ++n_land_cover;
    correct_land_cover += r.correct;
  }
}

void VqaAccuracy::merge(const VqaAccuracy& other) {
  n_yes_no += other.n_yes_no;
  n_land_cover += other.n_land_cover;
  correct_yes_no += other.correct_yes_no;
  correct_land_cover += other.correct_land_cover;
}

void VqaAccuracy::finalize() {
  auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  yes_no = ratio(correct_yes_no, n_yes_no);
  land_cover = ratio(correct_land_cover, n_land_cover);
  overall = ratio(correct_yes_no + correct_land_cover, n_yes_no + n_land_cover);
}

VqaAccuracy vqa_accuracy(std::span<const PredictionRecord> records) {
  VqaAccuracy acc;
  for (const auto& r : records) acc.add(r);
  acc.finalize();
  return acc;
}

double lb_score(double prior, double uniform) {
  if (!(uniform >= 0.0 && uniform < 1.0)) throw InvalidInput("L_B is undefined when uniform is 1");
  return (prior - uniform) / (1.0 - uniform);
}

nlohmann::ordered_json to_json(const BiasScores& b) {
  return {{"uniform", b.uniform}, {"prior", b.prior}, {"lb_score", b.lb_score},
          {"unique_answers", b.unique_answers}, {"total", b.total}};
}

BiasScores bias_scores(const std::map<std::string, std::size_t>& answer_counts) {
  if (answer_counts.size() < 2) throw InvalidInput("bias scores need at least two distinct answers");
  BiasScores b;
  std::size_t common = 0;
  for (const auto& [answer, n] : answer_counts) {
    if (n == 0) throw InvalidInput("answer '" + answer + "' has a zero count");
    b.total += n;
    common = std::max(common, n);
  }
  b.unique_answers = answer_counts.size();
  b.uniform = 1.0 / static_cast<double>(b.unique_answers);
  b.prior = static_cast<double>(common) / static_cast<double>(b.total);
  b.lb_score = lb_score(b.prior, b.uniform);
  return b;
}

std::vector<std::vector<double>> AnswerConfusion::row_normalized() const {
  std::vector<std::vector<double>> out;
  for (const auto& row : counts) {
    const auto total = std::accumulate(row.begin(), row.end(), std::uint64_t{0});
    std::vector<double> r(row.size(), 0.0);
    if (total > 0) {
      for (std::size_t j = 0; j < row.size(); ++j) r[j] = static_cast<double>(row[j]) / static_cast<double>(total);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::vector<double>> AnswerConfusion::log_scaled() const {
  std::vector<std::vector<double>> out;
  for (const auto& row : counts) {
    std::vector<double> r;
    for (auto v : row) r.push_back(std::log10(1.0 + static_cast<double>(v)));
    out.push_back(std::move(r));
  }
  return out;
}

std::string AnswerConfusion::to_csv() const { return render_csv(labels, counts); }

std::string AnswerConfusion::to_csv(const std::vector<std::vector<double>>& values) const {
  return render_csv(labels, values);
}

AnswerConfusion confusion_matrix(std::span<const PredictionRecord> records, std::span<const std::string> vocabulary,
                                 std::size_t top_k) {
  if (top_k == 0 || top_k > vocabulary.size()) {
    throw InvalidInput("top_k must be in [1, " + std::to_string(vocabulary.size()) + "]");
  }
  std::map<std::string, std::size_t> gold_counts;
  for (const auto& r : records) ++gold_counts[r.gold];
  std::vector<std::size_t> order(vocabulary.size());
  std::iota(order.begin(), order.end(), 0);
  auto count_of = [&](std::size_t i) {
    auto it = gold_counts.find(vocabulary[i]);
    return it == gold_counts.end() ? std::size_t{0} : it->second;
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return count_of(a) > count_of(b); });

  AnswerConfusion cm;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < top_k; ++i) {
    cm.labels.push_back(vocabulary[order[i]]);
    index[cm.labels.back()] = i;
  }
  cm.counts.assign(top_k, std::vector<std::uint64_t>(top_k + 1, 0));
  for (const auto& r : records) {
    auto g = index.find(r.gold);
    if (g == index.end()) continue;
    auto p = index.find(r.predicted);
    ++cm.counts[g->second][p == index.end() ? top_k : p->second];
  }
  return cm;
}

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["split"] = split;
  j["dataset_hash"] = dataset_hash;
  if (classification) {
    j["classification"] = {{"hd", classification->hd},
                           {"mr", classification->mr},
                           {"f1_micro", classification->f1_micro},
                           {"f1_average", classification->f1_average},
                           {"per_class_f1", classification->per_class_f1}};
  }
  if (vqa) {
    j["vqa"] = {{"acc_yes_no", optional_json(vqa->yes_no)},
                {"acc_land_cover", optional_json(vqa->land_cover)},
                {"acc_overall", optional_json(vqa->overall)},
                {"n_yes_no", vqa->n_yes_no},
                {"n_land_cover", vqa->n_land_cover},
                {"correct_yes_no", vqa->correct_yes_no},
                {"correct_land_cover", vqa->correct_land_cover}};
  }
  if (bias) {
    auto b = eval::to_json(*bias);
    for (const auto& [type, scores] : bias_by_type) b["by_type"][type] = eval::to_json(scores);
    j["bias"] = b;
  }
  if (confusion) {
    j["answer_confusion"] = {{"labels", confusion->labels}, {"other_column", kOtherAnswer},
                             {"counts", confusion->counts}};
  }
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.model = j.at("model").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.dataset_hash = j.at("dataset_hash").get<std::string>();
  if (j.contains("classification")) {
    const auto& c = j["classification"];
    r.classification = ClassificationMetrics{c.at("hd").get<double>(), c.at("mr").get<double>(),
                                             c.at("f1_micro").get<double>(), c.at("f1_average").get<double>(),
                                             c.at("per_class_f1").get<std::vector<double>>()};
  }
  if (j.contains("vqa")) {
    const auto& v = j["vqa"];
    VqaAccuracy acc;
    acc.yes_no = optional_from(v.at("acc_yes_no"));
    acc.land_cover = optional_from(v.at("acc_land_cover"));
    acc.overall = optional_from(v.at("acc_overall"));
    acc.n_yes_no = v.at("n_yes_no").get<std::size_t>();
    acc.n_land_cover = v.at("n_land_cover").get<std::size_t>();
    acc.correct_yes_no = v.at("correct_yes_no").get<std::size_t>();
    acc.correct_land_cover = v.at("correct_land_cover").get<std::size_t>();
    r.vqa = acc;
  }
  if (j.contains("bias")) {
    r.bias = bias_from(j["bias"]);
    if (j["bias"].contains("by_type")) {
      for (const auto& [type, scores] : j["bias"]["by_type"].items()) r.bias_by_type[type] = bias_from(scores);
    }
  }
  if (j.contains("answer_confusion")) {
    const auto& c = j["answer_confusion"];
    r.confusion = AnswerConfusion{c.at("labels").get<std::vector<std::string>>(),
                                  c.at("counts").get<std::vector<std::vector<std::uint64_t>>>()};
  }
  return r;
}

}  // namespace rsvqa::eval
