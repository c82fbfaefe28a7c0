#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace rsvqa::corpus {

using ClassId = std::size_t;

enum class Level { L1 = 1, L2 = 2, L3 = 3 };

std::string to_string(Level level);
Level level_from_string(std::string_view text);

struct ClassEntry {
  ClassId id = 0;
  std::string name;
  Level level = Level::L1;
  std::optional<ClassId> parent;

  bool operator==(const ClassEntry&) const = default;
};

/// Hierarchical land-cover nomenclature with dense ids 0..n-1.
class ClassTaxonomy {
 public:
  ClassTaxonomy() = default;
  /// Validates ids, unique names and parent levels; throws InvalidInput.
  explicit ClassTaxonomy(std::vector<ClassEntry> classes);

  std::size_t size() const noexcept { return classes_.size(); }
  bool empty() const noexcept { return classes_.empty(); }
  const std::vector<ClassEntry>& classes() const noexcept { return classes_; }
  const ClassEntry& at(ClassId id) const;
  std::optional<ClassId> find(std::string_view name) const;
  std::vector<ClassId> at_level(Level level) const;
  /// Ancestors of `id`, nearest first.
  std::vector<ClassId> ancestors(ClassId id) const;

  /// Sets every ancestor bit of every set bit.
  void close_labels(std::vector<std::uint8_t>& labels) const;
  bool is_closed(std::span<const std::uint8_t> labels) const;

  /// The CORINE nomenclature as used for the 61-label BigEarthNet-MM question
  /// corpus: 64 CLC classes with the two duplicated names ("Water bodies",
  /// "Pastures") merged into their higher-level entry and "Glaciers and
  /// perpetual snow" dropped. Ids run L1, then L2, then L3.
  static ClassTaxonomy clc61();
  /// `n` top-level classes with land-cover-like names, no hierarchy.
  static ClassTaxonomy flat(std::size_t n);

  nlohmann::json to_json() const;
  static ClassTaxonomy from_json(const nlohmann::json& j);

  bool operator==(const ClassTaxonomy&) const = default;

 private:
  std::vector<ClassEntry> classes_;
};

}  // namespace rsvqa::corpus
