#include "rsvqa/corpus/questions.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "rsvqa/common/errors.hpp"

namespace rsvqa::corpus {

namespace {

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput(std::string("question mix: ") + name + " must be in [0,1]");
}

void check_labels(std::span<const std::uint8_t> labels, const ClassTaxonomy& taxonomy) {
  if (labels.size() != taxonomy.size()) {
    throw InvalidInput("label vector has " + std::to_string(labels.size()) + " entries, taxonomy has " +
                       std::to_string(taxonomy.size()));
  }
}

ClassId draw_unused(Rng& rng, const std::vector<ClassId>& pool, const std::vector<ClassId>& used) {
  std::vector<ClassId> candidates;
  for (auto id : pool) {
    if (std::find(used.begin(), used.end(), id) == used.end()) candidates.push_back(id);
  }
  return candidates[rng.index(candidates.size())];
}

std::string join_names(const std::vector<ClassId>& ids, const ClassTaxonomy& taxonomy) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += i + 1 == ids.size() ? " and " : ", ";
    out += lowercase(taxonomy.at(ids[i]).name);
  }
  return out;
}

}  // namespace

void validate(const QuestionMix& mix) {
  check_probability(mix.yes_no_fraction, "yes_no_fraction");
  check_probability(mix.conjunction_fraction, "conjunction_fraction");
  check_probability(mix.double_conjunction_fraction, "double_conjunction_fraction");
  check_probability(mix.and_fraction, "and_fraction");
  check_probability(mix.present_term_fraction, "present_term_fraction");
  check_probability(mix.level_query_fraction, "level_query_fraction");
  check_probability(mix.exclusion_fraction, "exclusion_fraction");
  if (mix.double_conjunction_fraction > mix.conjunction_fraction) {
    throw InvalidInput("question mix: two-conjunction fraction exceeds the conjunction fraction");
  }
}

QuestionType question_type(const QuestionAst& ast) {
  return std::holds_alternative<PresenceQuery>(ast) ? QuestionType::yes_no : QuestionType::land_cover;
}

std::size_t conjunction_count(const QuestionAst& ast) {
  if (const auto* p = std::get_if<PresenceQuery>(&ast)) return p->ops.size();
  return 0;
}

std::string render_question(const QuestionAst& ast, const ClassTaxonomy& taxonomy) {
  if (const auto* p = std::get_if<PresenceQuery>(&ast)) {
    std::string text = "Is there ";
    for (std::size_t i = 0; i < p->terms.size(); ++i) {
      if (i) text += p->ops[i - 1] == Conjunction::and_ ? " and " : " or ";
      text += lowercase(taxonomy.at(p->terms[i]).name);
    }
    return text + " in the image?";
  }
  const auto& q = std::get<LandCoverQuery>(ast);
  std::string what = q.level ? "what level " + std::to_string(static_cast<int>(*q.level)) + " classes"
                             : std::string("what classes");
  std::string text;
  if (!q.excluded.empty()) {
    text = "Besides " + join_names(q.excluded, taxonomy) + ", " + what;
  } else {
    what[0] = 'W';
    text = what;
  }
  return text + " are present in the image?";
}

std::string canonical_answer(std::vector<ClassId> classes, const ClassTaxonomy& taxonomy) {
  if (classes.empty()) return "None";
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  std::string out;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (i) out += ", ";
    out += taxonomy.at(classes[i]).name;
  }
  return out;
}

std::optional<std::vector<ClassId>> parse_land_cover_answer(const std::string& answer, const ClassTaxonomy& taxonomy) {
  if (answer == "None") return std::vector<ClassId>{};
  std::vector<std::string> pieces;
  std::size_t start = 0;
  while (true) {
    const auto pos = answer.find(", ", start);
    pieces.push_back(answer.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 2;
  }
  std::vector<ClassId> out;
  std::size_t i = 0;
  while (i < pieces.size()) {
    std::optional<ClassId> match;
    std::size_t next = i;
    std::string candidate;
    for (std::size_t j = i; j < pieces.size(); ++j) {
      candidate += (j > i ? ", " : "") + pieces[j];
      if (auto id = taxonomy.find(candidate)) {
        match = id;
        next = j + 1;
      }
    }
    if (!match) return std::nullopt;
    out.push_back(*match);
    i = next;
  }
  if (!std::is_sorted(out.begin(), out.end()) || std::adjacent_find(out.begin(), out.end()) != out.end()) {
    return std::nullopt;
  }
  return out;
}

std::string derive_answer(const QuestionAst& ast, std::span<const std::uint8_t> labels, const ClassTaxonomy& taxonomy) {
  check_labels(labels, taxonomy);
  if (const auto* p = std::get_if<PresenceQuery>(&ast)) {
    if (p->terms.empty() || p->ops.size() + 1 != p->terms.size()) {
      throw InvalidInput("presence query needs n terms and n-1 conjunctions");
    }
    for (auto id : p->terms) taxonomy.at(id);
    // Disjunction of conjunctive groups.
    bool any = false;
    bool group = labels[p->terms[0]] != 0;
    for (std::size_t i = 0; i < p->ops.size(); ++i) {
      const bool term = labels[p->terms[i + 1]] != 0;
      if (p->ops[i] == Conjunction::and_) {
        group = group && term;
      } else {
        any = any || group;
        group = term;
      }
    }
    return (any || group) ? "yes" : "no";
  }
  const auto& q = std::get<LandCoverQuery>(ast);
  for (auto id : q.excluded) {
    const auto& entry = taxonomy.at(id);
    if (q.level && entry.level != *q.level) {
      throw InvalidInput("excluded class '" + entry.name + "' is not at the queried level");
    }
  }
  std::vector<ClassId> present;
  for (ClassId id = 0; id < labels.size(); ++id) {
    if (!labels[id]) continue;
    if (q.level && taxonomy.at(id).level != *q.level) continue;
    if (std::find(q.excluded.begin(), q.excluded.end(), id) != q.excluded.end()) continue;
    present.push_back(id);
  }
  return canonical_answer(std::move(present), taxonomy);
}

GeneratedQuestion sample_question(Rng& rng, std::span<const std::uint8_t> labels, const ClassTaxonomy& taxonomy,
                                  const QuestionMix& mix) {
  check_labels(labels, taxonomy);
  if (taxonomy.empty()) throw InvalidInput("empty taxonomy");
  std::vector<ClassId> all(taxonomy.size());
  for (ClassId id = 0; id < all.size(); ++id) all[id] = id;
  std::vector<ClassId> present;
  for (ClassId id = 0; id < labels.size(); ++id) {
    if (labels[id]) present.push_back(id);
  }

  GeneratedQuestion out;
  if (rng.bernoulli(mix.yes_no_fraction)) {
    const double u = rng.uniform();
    std::size_t conjunctions = u < mix.double_conjunction_fraction ? 2 : (u < mix.conjunction_fraction ? 1 : 0);
    conjunctions = std::min(conjunctions, taxonomy.size() - 1);
    PresenceQuery q;
    for (std::size_t t = 0; t <= conjunctions; ++t) {
      const bool from_present = rng.bernoulli(mix.present_term_fraction);
      std::size_t unused_present = 0;
      for (auto id : present) unused_present += std::find(q.terms.begin(), q.terms.end(), id) == q.terms.end();
      q.terms.push_back(draw_unused(rng, from_present && unused_present > 0 ? present : all, q.terms));
      if (t > 0) q.ops.push_back(rng.bernoulli(mix.and_fraction) ? Conjunction::and_ : Conjunction::or_);
    }
    out.ast = std::move(q);
  } else {
    LandCoverQuery q;
    if (rng.bernoulli(mix.level_query_fraction)) {
      std::vector<Level> levels;
      for (Level l : {Level::L1, Level::L2, Level::L3}) {
        if (!taxonomy.at_level(l).empty()) levels.push_back(l);
      }
      q.level = levels[rng.index(levels.size())];
      std::vector<ClassId> candidates;
      for (auto id : present) {
        if (taxonomy.at(id).level == *q.level) candidates.push_back(id);
      }
      if (!candidates.empty() && rng.bernoulli(mix.exclusion_fraction)) {
        q.excluded.push_back(draw_unused(rng, candidates, q.excluded));
        if (candidates.size() > 1 && rng.bernoulli(0.2)) q.excluded.push_back(draw_unused(rng, candidates, q.excluded));
        std::sort(q.excluded.begin(), q.excluded.end());
      }
    }
    out.ast = std::move(q);
  }
  out.qtype = question_type(out.ast);
  out.text = render_question(out.ast, taxonomy);
  return out;
}

std::vector<QARecord> generate_questions(const PatchRecord& patch, const ClassTaxonomy& taxonomy, int k,
                                         std::uint64_t seed, const QuestionMix& mix) {
  if (k <= 0) throw InvalidInput("question count must be positive");
  if (taxonomy.empty()) throw InvalidInput("empty taxonomy");
  validate(mix);
  check_labels(patch.labels, taxonomy);
  if (!taxonomy.is_closed(patch.labels)) {
    throw InvalidInput("labels of patch '" + patch.patch_id + "' are not hierarchy-consistent");
  }
  Rng rng(derive_seed(seed, patch.patch_id));
  std::vector<QARecord> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    auto q = sample_question(rng, patch.labels, taxonomy, mix);
    out.push_back({patch.patch_id, q.text, q.qtype, derive_answer(q.ast, patch.labels, taxonomy), Split::train});
  }
  return out;
}

}  // namespace rsvqa::corpus
