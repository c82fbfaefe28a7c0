#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rsvqa/common/random.hpp"
#include "rsvqa/corpus/records.hpp"
#include "rsvqa/corpus/taxonomy.hpp"

namespace rsvqa::corpus {

enum class Conjunction { and_, or_ };

/// "Is there A or B and C in the image?" -- `ops[i]` joins terms[i] and
/// terms[i+1]. 'and' binds tighter than 'or'.
struct PresenceQuery {
  std::vector<ClassId> terms;
  std::vector<Conjunction> ops;

  bool operator==(const PresenceQuery&) const = default;
};

/// "[Besides X,] what [level N] classes are present in the image?" With a
/// level, only classes at that level are listed; excluded classes live at the
/// queried level.
struct LandCoverQuery {
  std::optional<Level> level;
  std::vector<ClassId> excluded;

  bool operator==(const LandCoverQuery&) const = default;
};

using QuestionAst = std::variant<PresenceQuery, LandCoverQuery>;

/// Question-type and phrasing proportions. Defaults: 80.7% yes/no questions,
/// of which 72.3% carry at least one conjunction and 27.1% carry two.
struct QuestionMix {
  double yes_no_fraction = 0.807;
  double conjunction_fraction = 0.723;
  double double_conjunction_fraction = 0.271;
  double and_fraction = 0.5;
  // Probability that a presence term is drawn from the classes present in the
  // patch rather than from the whole taxonomy.
  double present_term_fraction = 0.5;
  double level_query_fraction = 0.75;
  double exclusion_fraction = 0.5;
};

void validate(const QuestionMix& mix);

struct GeneratedQuestion {
  QuestionAst ast;
  QuestionType qtype = QuestionType::yes_no;
  std::string text;
};

QuestionType question_type(const QuestionAst& ast);
std::string render_question(const QuestionAst& ast, const ClassTaxonomy& taxonomy);

/// "None" for the empty set, otherwise class names in ascending id order
/// joined by ", ".
std::string canonical_answer(std::vector<ClassId> classes, const ClassTaxonomy& taxonomy);
/// Inverse of canonical_answer. Class names may themselves contain ", ", so
/// pieces are matched greedily against the nomenclature. nullopt if the text
/// is not a valid class list.
std::optional<std::vector<ClassId>> parse_land_cover_answer(const std::string& answer, const ClassTaxonomy& taxonomy);

/// Evaluates a question against a label vector. Throws InvalidInput on unknown
/// class ids or a label vector of the wrong length.
std::string derive_answer(const QuestionAst& ast, std::span<const std::uint8_t> labels, const ClassTaxonomy& taxonomy);

GeneratedQuestion sample_question(Rng& rng, std::span<const std::uint8_t> labels, const ClassTaxonomy& taxonomy,
                                  const QuestionMix& mix);

/// k question/answer pairs for one patch, a pure function of
/// (patch id, labels, taxonomy, k, seed, mix). Records default to the train
/// split; the dataset builder assigns the final split.
std::vector<QARecord> generate_questions(const PatchRecord& patch, const ClassTaxonomy& taxonomy, int k,
                                         std::uint64_t seed, const QuestionMix& mix = {});

/// Number of conjunctions in a yes/no question, 0 for land-cover questions.
std::size_t conjunction_count(const QuestionAst& ast);

}  // namespace rsvqa::corpus
