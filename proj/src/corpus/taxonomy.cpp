#include "rsvqa/corpus/taxonomy.hpp"

#include <map>
#include <set>

#include "rsvqa/common/errors.hpp"

namespace rsvqa::corpus {

std::string to_string(Level level) { return "L" + std::to_string(static_cast<int>(level)); }

Level level_from_string(std::string_view text) {
  if (text == "L1") return Level::L1;
  if (text == "L2") return Level::L2;
  if (text == "L3") return Level::L3;
  throw InvalidInput("unknown hierarchy level '" + std::string(text) + "'");
}

ClassTaxonomy::ClassTaxonomy(std::vector<ClassEntry> classes) : classes_(std::move(classes)) {
  std::set<std::string> names;
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    const auto& c = classes_[i];
    if (c.id != i) throw InvalidInput("class ids must be dense and ordered; entry " + std::to_string(i) + " has id " + std::to_string(c.id));
    if (c.name.empty()) throw InvalidInput("class " + std::to_string(i) + " has an empty name");
    if (!names.insert(c.name).second) throw InvalidInput("duplicate class name '" + c.name + "'");
    if (c.level == Level::L1) {
      if (c.parent) throw InvalidInput("L1 class '" + c.name + "' must not have a parent");
      continue;
    }
    if (!c.parent || *c.parent >= classes_.size()) {
      throw InvalidInput("class '" + c.name + "' needs a valid parent");
    }
    const auto expected = static_cast<int>(c.level) - 1;
    if (static_cast<int>(classes_[*c.parent].level) != expected) {
      throw InvalidInput("class '" + c.name + "' at " + to_string(c.level) + " has a parent at " +
                         to_string(classes_[*c.parent].level));
    }
  }
}

const ClassEntry& ClassTaxonomy::at(ClassId id) const {
  if (id >= classes_.size()) throw InvalidInput("unknown class id " + std::to_string(id));
  return classes_[id];
}

std::optional<ClassId> ClassTaxonomy::find(std::string_view name) const {
  for (const auto& c : classes_) {
    if (c.name == name) return c.id;
  }
  return std::nullopt;
}

std::vector<ClassId> ClassTaxonomy::at_level(Level level) const {
  std::vector<ClassId> out;
  for (const auto& c : classes_) {
    if (c.level == level) out.push_back(c.id);
  }
  return out;
}

std::vector<ClassId> ClassTaxonomy::ancestors(ClassId id) const {
  std::vector<ClassId> out;
  for (auto p = at(id).parent; p; p = classes_[*p].parent) out.push_back(*p);
  return out;
}

void ClassTaxonomy::close_labels(std::vector<std::uint8_t>& labels) const {
  if (labels.size() != classes_.size()) throw InvalidInput("label vector length does not match taxonomy");
  // Parents precede children only by level, so walk each chain explicitly.
  for (ClassId id = 0; id < labels.size(); ++id) {
    if (!labels[id]) continue;
    for (auto a : ancestors(id)) labels[a] = 1;
  }
}

bool ClassTaxonomy::is_closed(std::span<const std::uint8_t> labels) const {
  if (labels.size() != classes_.size()) return false;
  for (ClassId id = 0; id < labels.size(); ++id) {
    if (labels[id] && classes_[id].parent && !labels[*classes_[id].parent]) return false;
  }
  return true;
}

namespace {

struct Spec {
  const char* code;
  const char* name;
};

// CLC nomenclature, minus the merged duplicates and the glacier class.
constexpr Spec kClcL1[] = {{"1", "Artificial surfaces"},
                           {"2", "Agricultural areas"},
                           {"3", "Forest and semi natural areas"},
                           {"4", "Wetlands"},
                           {"5", "Water bodies"}};

constexpr Spec kClcL2[] = {{"11", "Urban fabric"},
                           {"12", "Industrial, commercial and transport units"},
                           {"13", "Mine, dump and construction sites"},
                           {"14", "Artificial, non-agricultural vegetated areas"},
                           {"21", "Arable land"},
                           {"22", "Permanent crops"},
                           {"23", "Pastures"},
                           {"24", "Heterogeneous agricultural areas"},
                           {"31", "Forests"},
                           {"32", "Scrub and/or herbaceous vegetation associations"},
                           {"33", "Open spaces with little or no vegetation"},
                           {"41", "Inland wetlands"},
                           {"42", "Maritime wetlands"},
                           {"51", "Inland waters"},
                           {"52", "Marine waters"}};

constexpr Spec kClcL3[] = {{"111", "Continuous urban fabric"},
                           {"112", "Discontinuous urban fabric"},
                           {"121", "Industrial or commercial units"},
                           {"122", "Road and rail networks and associated land"},
                           {"123", "Port areas"},
                           {"124", "Airports"},
                           {"131", "Mineral extraction sites"},
                           {"132", "Dump sites"},
                           {"133", "Construction sites"},
                           {"141", "Green urban areas"},
                           {"142", "Sport and leisure facilities"},
                           {"211", "Non-irrigated arable land"},
                           {"212", "Permanently irrigated land"},
                           {"213", "Rice fields"},
                           {"221", "Vineyards"},
                           {"222", "Fruit trees and berry plantations"},
                           {"223", "Olive groves"},
                           {"241", "Annual crops associated with permanent crops"},
                           {"242", "Complex cultivation patterns"},
                           {"243", "Land principally occupied by agriculture, with significant areas of natural vegetation"},
                           {"244", "Agro-forestry areas"},
                           {"311", "Broad-leaved forest"},
                           {"312", "Coniferous forest"},
                           {"313", "Mixed forest"},
                           {"321", "Natural grasslands"},
                           {"322", "Moors and heathland"},
                           {"323", "Sclerophyllous vegetation"},
                           {"324", "Transitional woodland/shrub"},
                           {"331", "Beaches, dunes, sands"},
                           {"332", "Bare rock"},
                           {"333", "Sparsely vegetated areas"},
                           {"334", "Burnt areas"},
                           {"411", "Inland marshes"},
                           {"412", "Peatbogs"},
                           {"421", "Salt marshes"},
                           {"422", "Salines"},
                           {"423", "Intertidal flats"},
                           {"511", "Water courses"},
                           {"521", "Coastal lagoons"},
                           {"522", "Estuaries"},
                           {"523", "Sea and ocean"}};

constexpr const char* kFlatNames[] = {"Water",     "Forest",   "Urban area", "Cropland",  "Wetland",
                                      "Pasture",   "Bare soil", "Vineyard",   "Grassland", "Orchard",
                                      "Beach",     "Marsh",    "Industry",   "Airport",   "Rice field",
                                      "Heathland"};

}  // namespace

ClassTaxonomy ClassTaxonomy::clc61() {
  std::vector<ClassEntry> entries;
  std::map<std::string, ClassId> by_code;
  auto add = [&](const Spec& s, Level level, std::optional<ClassId> parent) {
    by_code[s.code] = entries.size();
    entries.push_back({entries.size(), s.name, level, parent});
  };
  for (const auto& s : kClcL1) add(s, Level::L1, std::nullopt);
  for (const auto& s : kClcL2) add(s, Level::L2, by_code.at(std::string(1, s.code[0])));
  for (const auto& s : kClcL3) add(s, Level::L3, by_code.at(std::string(s.code, 2)));
  return ClassTaxonomy(std::move(entries));
}

ClassTaxonomy ClassTaxonomy::flat(std::size_t n) {
  std::vector<ClassEntry> entries;
  constexpr std::size_t named = std::size(kFlatNames);
  for (std::size_t i = 0; i < n; ++i) {
    entries.push_back({i, i < named ? kFlatNames[i] : "Class " + std::to_string(i), Level::L1, std::nullopt});
  }
  return ClassTaxonomy(std::move(entries));
}

nlohmann::json ClassTaxonomy::to_json() const {
  auto out = nlohmann::json::array();
  for (const auto& c : classes_) {
    out.push_back({{"id", c.id},
                   {"name", c.name},
                   {"level", to_string(c.level)},
                   {"parent", c.parent ? nlohmann::json(*c.parent) : nlohmann::json(nullptr)}});
  }
  return out;
}

ClassTaxonomy ClassTaxonomy::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw InvalidInput("taxonomy must be a JSON list");
  std::vector<ClassEntry> entries;
  try {
    for (const auto& item : j) {
      ClassEntry e;
      e.id = item.at("id").get<ClassId>();
      e.name = item.at("name").get<std::string>();
      e.level = level_from_string(item.at("level").get<std::string>());
      if (item.contains("parent") && !item.at("parent").is_null()) e.parent = item.at("parent").get<ClassId>();
      entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed taxonomy entry: ") + e.what());
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return ClassTaxonomy(std::move(entries));
}

}  // namespace rsvqa::corpus
