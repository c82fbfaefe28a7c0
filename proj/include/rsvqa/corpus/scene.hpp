#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rsvqa/corpus/records.hpp"
#include "rsvqa/corpus/sar.hpp"
#include "rsvqa/corpus/taxonomy.hpp"

namespace rsvqa::corpus {

struct ClassVisibility {
  bool optical_visible = true;
  bool sar_visible = true;
};

/// Controlled paired-modality scene generator. Each class owns a fixed texture
/// signature (orientation, spatial frequency, optical colour, VV/VH response);
/// a present class is painted into a random rectangle of every modality in
/// which it is visible.
struct SceneConfig {
  std::size_t n_classes = 8;
  std::size_t height = 32;
  std::size_t width = 32;
  std::vector<ClassVisibility> visibility;  // one per class
  double noise_level = 0.05;                // stddev of additive noise, normalized units
  std::vector<double> class_frequency;      // independent Bernoulli presence, (0, 1]
  // Optional hierarchy (one entry per class); presence of a child implies its
  // ancestors. Empty means flat.
  std::vector<std::optional<ClassId>> parents;
  SarClipBounds sar_bounds;
  double lon_min = -10.0;
  double lon_max = 30.0;
  double lat_min = 35.0;
  double lat_max = 70.0;

  /// Flat config with every class visible in both modalities.
  static SceneConfig uniform(std::size_t n_classes, double frequency, std::size_t size = 32);
};

void validate(const SceneConfig& config);

/// Deterministic in (config, seed). The optical raster depends only on classes
/// that are optical-visible (and likewise for SAR), so an invisible class
/// leaves that modality bit-identical. `patch_id` defaults to a seed-derived id.
PatchRecord synthesize_scene(const SceneConfig& config, std::uint64_t seed, std::string patch_id = {});

/// Generates `count` patches with per-patch seeds derive_seed(seed, index).
std::vector<PatchRecord> synthesize_corpus(const SceneConfig& config, std::size_t count, std::uint64_t seed);

ClassTaxonomy scene_taxonomy(const SceneConfig& config);

}  // namespace rsvqa::corpus
