#include "rsvqa/corpus/records.hpp"

#include "rsvqa/common/errors.hpp"

namespace rsvqa::corpus {

std::string to_string(QuestionType t) { return t == QuestionType::yes_no ? "yes_no" : "land_cover"; }

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

QuestionType question_type_from_string(std::string_view text) {
  if (text == "yes_no") return QuestionType::yes_no;
  if (text == "land_cover") return QuestionType::land_cover;
  throw InvalidInput("unknown question type '" + std::string(text) + "'");
}

Split split_from_string(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw InvalidInput("unknown split '" + std::string(text) + "'");
}

}  // namespace rsvqa::corpus
