#include "rsvqa/pipelines/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "rsvqa/common/errors.hpp"

namespace rsvqa::pipelines {

std::vector<std::string> tokenize(std::string_view text, bool keep_commas) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      word += static_cast<char>(std::tolower(c));
    } else if (std::isspace(c)) {
      flush();
    } else if (ch == ',' && keep_commas) {
      flush();
      out.emplace_back(",");
    }
  }
  flush();
  return out;
}

TokenVocabulary::TokenVocabulary() : tokens_{"[PAD]", "[UNK]", "[CLS]", "[SEP]"} {
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = i;
}

TokenVocabulary TokenVocabulary::build(std::span<const std::string> texts, bool keep_commas) {
  std::set<std::string> seen;
  for (const auto& t : texts) {
    for (auto& tok : tokenize(t, keep_commas)) seen.insert(std::move(tok));
  }
  TokenVocabulary v;
  for (const auto& tok : seen) {
    if (v.index_.contains(tok)) continue;
    v.index_[tok] = v.tokens_.size();
    v.tokens_.push_back(tok);
  }
  return v;
}

std::size_t TokenVocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::size_t> TokenVocabulary::encode(std::string_view text, bool keep_commas) const {
  std::vector<std::size_t> out;
  for (const auto& tok : tokenize(text, keep_commas)) out.push_back(id(tok));
  return out;
}

nlohmann::json TokenVocabulary::to_json() const { return tokens_; }

TokenVocabulary TokenVocabulary::from_json(const nlohmann::json& j) {
  TokenVocabulary v;
  const auto tokens = j.get<std::vector<std::string>>();
  if (tokens.size() < 4 || !std::equal(v.tokens_.begin(), v.tokens_.end(), tokens.begin())) {
    throw DataError("token vocabulary must start with the special tokens");
  }
  v.tokens_ = tokens;
  v.index_.clear();
  for (std::size_t i = 0; i < tokens.size(); ++i) v.index_[tokens[i]] = i;
  return v;
}

AnswerVocabulary AnswerVocabulary::build(std::span<const corpus::QARecord> train, std::size_t cap) {
  if (train.empty()) throw InvalidInput("answer vocabulary needs at least one training record");
  static const std::vector<std::string> required{"yes", "no", "None"};
  if (cap < required.size()) throw InvalidInput("answer cap must be at least 3");
  std::map<std::string, std::size_t> counts;
  for (const auto& r : train) ++counts[r.answer];
  for (const auto& a : required) counts.try_emplace(a, 0);

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::size_t free_slots = cap - required.size();
  AnswerVocabulary v;
  for (const auto& [answer, n] : ranked) {
    const bool must = std::find(required.begin(), required.end(), answer) != required.end();
    if (!must) {
      if (free_slots == 0) continue;
      --free_slots;
    }
    v.index_[answer] = v.answers_.size();
    v.answers_.push_back(answer);
    v.counts_.push_back(n);
  }
  return v;
}

std::optional<std::size_t> AnswerVocabulary::index(const std::string& answer) const {
  auto it = index_.find(answer);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int AnswerVocabulary::target(const std::string& answer) const {
  auto i = index(answer);
  return i ? static_cast<int>(*i) : kOov;
}

nlohmann::json AnswerVocabulary::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (std::size_t i = 0; i < answers_.size(); ++i) j.push_back({{"answer", answers_[i]}, {"count", counts_[i]}});
  return j;
}

AnswerVocabulary AnswerVocabulary::from_json(const nlohmann::json& j) {
  AnswerVocabulary v;
  for (const auto& e : j) {
    const auto answer = e.at("answer").get<std::string>();
    if (v.index_.contains(answer)) throw DataError("duplicate answer '" + answer + "' in vocabulary");
    v.index_[answer] = v.answers_.size();
    v.answers_.push_back(answer);
    v.counts_.push_back(e.at("count").get<std::size_t>());
  }
  return v;
}

std::size_t argmax(std::span<const double> scores) {
  if (scores.empty()) throw InvalidInput("argmax of an empty score vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

}  // namespace rsvqa::pipelines
