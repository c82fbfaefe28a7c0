#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace rsvqa {

/// Planar float image, channel-major [C, H, W].
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  bool empty() const noexcept { return data.empty(); }
  std::size_t plane_size() const noexcept { return height * width; }

  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * height + y) * width + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }

  Image channel(std::size_t c) const;

  bool operator==(const Image&) const = default;
};

/// Portable float map (PFM) I/O. One-channel images are written as "Pf",
/// three-channel images as "PF"; other channel counts are rejected.
void write_pfm(const std::filesystem::path& path, const Image& image);
Image read_pfm(const std::filesystem::path& path);

}  // namespace rsvqa
