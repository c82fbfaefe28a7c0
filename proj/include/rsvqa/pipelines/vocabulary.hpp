#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "rsvqa/corpus/records.hpp"

namespace rsvqa::pipelines {

/// Lowercased words with punctuation removed. With `keep_commas`, each comma
/// becomes its own token (used for context lists).
std::vector<std::string> tokenize(std::string_view text, bool keep_commas = false);

class TokenVocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kCls = 2;
  static constexpr std::size_t kSep = 3;

  TokenVocabulary();
  /// Every distinct token of `texts`, sorted, after the four special tokens.
  static TokenVocabulary build(std::span<const std::string> texts, bool keep_commas = true);

  std::size_t id(const std::string& token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  std::vector<std::size_t> encode(std::string_view text, bool keep_commas = false) const;
  std::size_t size() const { return tokens_.size(); }

  nlohmann::json to_json() const;
  static TokenVocabulary from_json(const nlohmann::json& j);
  bool operator==(const TokenVocabulary&) const = default;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> index_;
};

/// Finite answer set. Ranked by training frequency, ties in lexical order,
/// capped; "yes", "no" and "None" are always kept.
class AnswerVocabulary {
 public:
  static constexpr int kOov = -1;

  static AnswerVocabulary build(std::span<const corpus::QARecord> train, std::size_t cap = 1000);

  std::optional<std::size_t> index(const std::string& answer) const;
  /// Class index for training, or kOov.
  int target(const std::string& answer) const;
  const std::string& answer(std::size_t i) const { return answers_.at(i); }
  std::size_t count(std::size_t i) const { return counts_.at(i); }
  const std::vector<std::string>& answers() const { return answers_; }
  std::size_t size() const { return answers_.size(); }

  nlohmann::json to_json() const;
  static AnswerVocabulary from_json(const nlohmann::json& j);
  bool operator==(const AnswerVocabulary&) const = default;

 private:
  std::vector<std::string> answers_;
  std::vector<std::size_t> counts_;
  std::map<std::string, std::size_t> index_;
};

/// Index of the largest score; the lowest index wins ties.
std::size_t argmax(std::span<const double> scores);

}  // namespace rsvqa::pipelines
