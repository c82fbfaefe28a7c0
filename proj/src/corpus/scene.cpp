#include "rsvqa/corpus/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "rsvqa/common/errors.hpp"
#include "rsvqa/common/random.hpp"

namespace rsvqa::corpus {

namespace {

struct Signature {
  double orientation;
  double frequency;  // cycles per pixel
  double color[3];   // optical response per band
  double vv;         // SAR response, normalized units
  double vh;
};

// Fixed per-class appearance; a function of the class index only so a class
// looks the same in every patch.
Signature signature(std::size_t k) {
  constexpr double kFrequencies[] = {0.08, 0.16, 0.28};
  Rng rng(derive_seed(0x5ca1ab1eULL, static_cast<std::uint64_t>(k)));
  Signature s{};
  s.orientation = std::fmod(static_cast<double>(k) * 0.61803398875 * std::numbers::pi, std::numbers::pi);
  s.frequency = kFrequencies[k % 3];
  for (double& c : s.color) c = rng.uniform(-0.35, 0.35);
  s.color[k % 3] = 0.4;
  s.vv = rng.uniform(0.2, 0.4) * (k % 2 ? 1.0 : -1.0);
  s.vh = rng.uniform(0.2, 0.4) * (k % 4 < 2 ? 1.0 : -1.0);
  return s;
}

struct Region {
  std::size_t y0, y1, x0, x1;
  double phase;
};

Region draw_region(Rng& rng, std::size_t height, std::size_t width) {
  auto extent = [&](std::size_t size, std::size_t& lo, std::size_t& hi) {
    const auto len = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(rng.uniform(0.4, 0.8) * size)));
    lo = rng.index(size - std::min(len, size) + 1);
    hi = std::min(size, lo + len);
  };
  Region r{};
  extent(height, r.y0, r.y1);
  extent(width, r.x0, r.x1);
  r.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return r;
}

double texture(const Signature& s, const Region& r, std::size_t y, std::size_t x) {
  const double u = static_cast<double>(x) * std::cos(s.orientation) + static_cast<double>(y) * std::sin(s.orientation);
  return 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * s.frequency * u + r.phase);
}

}  // namespace

SceneConfig SceneConfig::uniform(std::size_t n_classes, double frequency, std::size_t size) {
  SceneConfig c;
  c.n_classes = n_classes;
  c.height = c.width = size;
  c.visibility.assign(n_classes, ClassVisibility{});
  c.class_frequency.assign(n_classes, frequency);
  return c;
}

void validate(const SceneConfig& c) {
  if (c.n_classes == 0) throw InvalidInput("scene config needs at least one class");
  if (c.height < 4 || c.width < 4) throw InvalidInput("scene images must be at least 4x4");
  if (c.visibility.size() != c.n_classes) throw InvalidInput("scene config: one visibility entry per class");
  if (c.class_frequency.size() != c.n_classes) throw InvalidInput("scene config: one frequency per class");
  if (!(c.noise_level >= 0.0)) throw InvalidInput("scene config: noise_level must be >= 0");
  for (std::size_t k = 0; k < c.n_classes; ++k) {
    if (!c.visibility[k].optical_visible && !c.visibility[k].sar_visible) {
      throw InvalidInput("class " + std::to_string(k) + " is invisible in both modalities");
    }
    if (!(c.class_frequency[k] > 0.0 && c.class_frequency[k] <= 1.0)) {
      throw InvalidInput("class " + std::to_string(k) + " frequency must be in (0, 1]");
    }
  }
  if (!c.parents.empty()) {
    if (c.parents.size() != c.n_classes) throw InvalidInput("scene config: one parent entry per class");
    scene_taxonomy(c);  // validates the hierarchy
  }
  if (!(c.lon_max >= c.lon_min && c.lat_max >= c.lat_min)) throw InvalidInput("scene config: bad lon/lat box");
}

ClassTaxonomy scene_taxonomy(const SceneConfig& c) {
  if (c.parents.empty()) return ClassTaxonomy::flat(c.n_classes);
  auto base = ClassTaxonomy::flat(c.n_classes);
  std::vector<ClassEntry> entries = base.classes();
  for (std::size_t k = 0; k < c.n_classes; ++k) {
    entries[k].parent = c.parents[k];
    std::size_t depth = 1;
    for (auto p = c.parents[k]; p; p = c.parents.at(*p)) {
      if (++depth > 3) throw InvalidInput("scene hierarchy deeper than three levels or cyclic");
    }
    entries[k].level = static_cast<Level>(depth);
  }
  return ClassTaxonomy(std::move(entries));
}

PatchRecord synthesize_scene(const SceneConfig& config, std::uint64_t seed, std::string patch_id) {
  validate(config);
  const std::size_t n = config.n_classes, h = config.height, w = config.width;
  PatchRecord patch;
  if (patch_id.empty()) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "syn_%016llx", static_cast<unsigned long long>(seed));
    patch_id = buf;
  }
  patch.patch_id = std::move(patch_id);

  Rng presence(derive_seed(seed, "presence"));
  patch.lon = presence.uniform(config.lon_min, config.lon_max);
  patch.lat = presence.uniform(config.lat_min, config.lat_max);
  patch.labels.assign(n, 0);
  for (std::size_t k = 0; k < n; ++k) patch.labels[k] = presence.bernoulli(config.class_frequency[k]) ? 1 : 0;
  if (!config.parents.empty()) scene_taxonomy(config).close_labels(patch.labels);

  Image optical(3, h, w);
  Image vv(1, h, w), vh(1, h, w);
  for (std::size_t c = 0; c < 3; ++c) std::fill_n(optical.data.begin() + static_cast<std::ptrdiff_t>(c * h * w), h * w, 0.35f + 0.05f * static_cast<float>(c));
  std::vector<double> vv_norm(h * w, 0.5), vh_norm(h * w, 0.5);

  for (std::size_t k = 0; k < n; ++k) {
    if (!patch.labels[k]) continue;
    Rng layout(derive_seed(seed, 1000 + static_cast<std::uint64_t>(k)));
    const Region r = draw_region(layout, h, w);
    const Signature s = signature(k);
    for (std::size_t y = r.y0; y < r.y1; ++y) {
      for (std::size_t x = r.x0; x < r.x1; ++x) {
        const double t = texture(s, r, y, x);
        if (config.visibility[k].optical_visible) {
          for (std::size_t c = 0; c < 3; ++c) optical.at(c, y, x) += static_cast<float>(s.color[c] * t);
        }
        if (config.visibility[k].sar_visible) {
          vv_norm[y * w + x] += s.vv * t;
          vh_norm[y * w + x] += s.vh * t;
        }
      }
    }
  }

  Rng optical_noise(derive_seed(seed, "optical-noise"));
  for (auto& v : optical.data) {
    const double noisy = v + (config.noise_level > 0.0 ? config.noise_level * optical_noise.normal() : 0.0);
    v = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
  }
  Rng sar_noise(derive_seed(seed, "sar-noise"));
  for (std::size_t i = 0; i < h * w; ++i) {
    const double a = config.noise_level > 0.0 ? config.noise_level * sar_noise.normal() : 0.0;
    const double b = config.noise_level > 0.0 ? config.noise_level * sar_noise.normal() : 0.0;
    vv.data[i] = static_cast<float>(to_db(vv_norm[i] + a, config.sar_bounds.vv));
    vh.data[i] = static_cast<float>(to_db(vh_norm[i] + b, config.sar_bounds.vh));
  }
  patch.optical = std::move(optical);
  patch.sar = compose_sar_channels(vv, vh, config.sar_bounds);
  patch.vv_db = std::move(vv);
  patch.vh_db = std::move(vh);
  return patch;
}

std::vector<PatchRecord> synthesize_corpus(const SceneConfig& config, std::size_t count, std::uint64_t seed) {
  std::vector<PatchRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "patch_%06zu", i);
    out.push_back(synthesize_scene(config, derive_seed(seed, static_cast<std::uint64_t>(i)), id));
  }
  return out;
}

}  // namespace rsvqa::corpus
