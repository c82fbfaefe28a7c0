#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "rsvqa/corpus/records.hpp"
#include "rsvqa/corpus/sar.hpp"
#include "rsvqa/corpus/taxonomy.hpp"

namespace rsvqa::corpus {

// Patch manifest: JSON lines
//   {"patch_id", "lon", "lat", "optical_path", "sar_vv_path", "sar_vh_path", "labels": [0/1 ...]}
// Image paths are PFM rasters, relative to the manifest's directory unless
// absolute. Optical rasters hold [0,1] reflectance; VV and VH hold dB.

/// Reads every record and its rasters. With `expected_classes`, label vectors of
/// any other length are rejected. Errors are ParseError carrying the line.
std::vector<PatchRecord> load_manifest(const std::filesystem::path& path,
                                       std::optional<std::size_t> expected_classes = std::nullopt,
                                       const SarClipBounds& bounds = {});

/// Writes rasters under `image_dir` (relative to the manifest directory) and
/// the manifest itself. Every record needs its vv_db / vh_db rasters.
void write_manifest(const std::filesystem::path& path, const std::vector<PatchRecord>& patches,
                    const std::filesystem::path& image_dir = "images");

// QA file: JSON lines {"patch_id", "question", "qtype", "answer", "split"}.
void write_qa_file(const std::filesystem::path& path, const std::vector<QARecord>& records);
std::vector<QARecord> load_qa_file(const std::filesystem::path& path);

// Taxonomy file: JSON list of {"id", "name", "level", "parent"}.
void write_taxonomy(const std::filesystem::path& path, const ClassTaxonomy& taxonomy);
ClassTaxonomy load_taxonomy(const std::filesystem::path& path);

}  // namespace rsvqa::corpus
