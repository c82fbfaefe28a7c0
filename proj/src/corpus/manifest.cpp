#include "rsvqa/corpus/manifest.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rsvqa/common/errors.hpp"

namespace rsvqa::corpus {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path candidate(p);
  return candidate.is_absolute() ? candidate : base / candidate;
}

}  // namespace

std::vector<PatchRecord> load_manifest(const fs::path& path, std::optional<std::size_t> expected_classes,
                                       const SarClipBounds& bounds) {
  auto in = open_input(path);
  const fs::path base = path.parent_path();
  std::vector<PatchRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    PatchRecord rec;
    try {
      const auto j = nlohmann::json::parse(line);
      rec.patch_id = j.at("patch_id").get<std::string>();
      rec.lon = j.at("lon").get<double>();
      rec.lat = j.at("lat").get<double>();
      for (const auto& bit : j.at("labels")) {
        const int v = bit.get<int>();
        if (v != 0 && v != 1) throw ParseError(path.string(), line_no, "label entries must be 0 or 1");
        rec.labels.push_back(static_cast<std::uint8_t>(v));
      }
      if (expected_classes && rec.labels.size() != *expected_classes) {
        throw ParseError(path.string(), line_no,
                         "patch '" + rec.patch_id + "' has " + std::to_string(rec.labels.size()) +
                             " label bits, expected " + std::to_string(*expected_classes));
      }
      rec.optical = read_pfm(resolve(base, j.at("optical_path").get<std::string>()));
      rec.vv_db = read_pfm(resolve(base, j.at("sar_vv_path").get<std::string>()));
      rec.vh_db = read_pfm(resolve(base, j.at("sar_vh_path").get<std::string>()));
    } catch (const ParseError&) {
      throw;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), line_no, std::string("malformed manifest row: ") + e.what());
    } catch (const DataError& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
    try {
      rec.sar = compose_sar_channels(rec.vv_db, rec.vh_db, bounds);
    } catch (const InvalidInput& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
    if (rec.optical.height != rec.sar.height || rec.optical.width != rec.sar.width) {
      throw ParseError(path.string(), line_no, "optical and SAR rasters differ in size");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_manifest(const fs::path& path, const std::vector<PatchRecord>& patches, const fs::path& image_dir) {
  const fs::path base = path.parent_path();
  fs::create_directories(base / image_dir);
  auto out = open_output(path);
  for (const auto& p : patches) {
    if (p.vv_db.empty() || p.vh_db.empty()) {
      throw InvalidInput("patch '" + p.patch_id + "' has no dB rasters to write");
    }
    const auto opt = image_dir / (p.patch_id + "_optical.pfm");
    const auto vv = image_dir / (p.patch_id + "_vv.pfm");
    const auto vh = image_dir / (p.patch_id + "_vh.pfm");
    write_pfm(base / opt, p.optical);
    write_pfm(base / vv, p.vv_db);
    write_pfm(base / vh, p.vh_db);
    ordered_json j;
    j["patch_id"] = p.patch_id;
    j["lon"] = p.lon;
    j["lat"] = p.lat;
    j["optical_path"] = opt.generic_string();
    j["sar_vv_path"] = vv.generic_string();
    j["sar_vh_path"] = vh.generic_string();
    j["labels"] = p.labels;
    out << j.dump() << "\n";
  }
}

void write_qa_file(const fs::path& path, const std::vector<QARecord>& records) {
  auto out = open_output(path);
  for (const auto& r : records) {
    ordered_json j;
    j["patch_id"] = r.patch_id;
    j["question"] = r.question;
    j["qtype"] = to_string(r.qtype);
    j["answer"] = r.answer;
    j["split"] = to_string(r.split);
    out << j.dump() << "\n";
  }
}

std::vector<QARecord> load_qa_file(const fs::path& path) {
  auto in = open_input(path);
  std::vector<QARecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      QARecord r;
      r.patch_id = j.at("patch_id").get<std::string>();
      r.question = j.at("question").get<std::string>();
      r.qtype = question_type_from_string(j.at("qtype").get<std::string>());
      r.answer = j.at("answer").get<std::string>();
      r.split = split_from_string(j.at("split").get<std::string>());
      if (r.qtype == QuestionType::yes_no && r.answer != "yes" && r.answer != "no") {
        throw InvalidInput("yes/no record with answer '" + r.answer + "'");
      }
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), line_no, std::string("malformed QA row: ") + e.what());
    } catch (const InvalidInput& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return out;
}

void write_taxonomy(const fs::path& path, const ClassTaxonomy& taxonomy) {
  auto out = open_output(path);
  out << taxonomy.to_json().dump(2) << "\n";
}

ClassTaxonomy load_taxonomy(const fs::path& path) {
  auto in = open_input(path);
  try {
    return ClassTaxonomy::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed taxonomy file " + path.string() + ": " + e.what());
  } catch (const InvalidInput& e) {
    throw DataError("invalid taxonomy file " + path.string() + ": " + e.what());
  }
}

}  // namespace rsvqa::corpus
