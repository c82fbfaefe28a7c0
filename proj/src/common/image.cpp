#include "rsvqa/common/image.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "rsvqa/common/errors.hpp"

namespace rsvqa {

Image Image::channel(std::size_t c) const {
  if (c >= channels) throw InvalidInput("channel index out of range");
  Image out(1, height, width);
  std::copy(data.begin() + static_cast<std::ptrdiff_t>(c * plane_size()),
            data.begin() + static_cast<std::ptrdiff_t>((c + 1) * plane_size()), out.data.begin());
  return out;
}

namespace {

float to_little_endian(float v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    auto bits = std::bit_cast<std::uint32_t>(v);
    bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) | (bits >> 24);
    return std::bit_cast<float>(bits);
  }
}

}  // namespace

// PFM stores rows bottom-to-top with interleaved channels.
void write_pfm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw InvalidInput("PFM supports 1 or 3 channels, got " + std::to_string(image.channels));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << (image.channels == 3 ? "PF" : "Pf") << "\n"
      << image.width << " " << image.height << "\n-1.0\n";
  std::vector<float> row(image.width * image.channels);
  for (std::size_t yy = 0; yy < image.height; ++yy) {
    const std::size_t y = image.height - 1 - yy;
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < image.channels; ++c) {
        row[x * image.channels + c] = to_little_endian(image.at(c, y, x));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing " + path.string());
}

Image read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  std::string magic;
  std::size_t width = 0, height = 0;
  double scale = 0.0;
  in >> magic >> width >> height >> scale;
  if (!in || (magic != "PF" && magic != "Pf") || width == 0 || height == 0 || scale == 0.0) {
    throw DataError("malformed PFM header in " + path.string());
  }
  in.get();  // single whitespace byte before the raster
  const std::size_t channels = magic == "PF" ? 3 : 1;
  const bool little = scale < 0.0;
  Image image(channels, height, width);
  std::vector<char> row(width * channels * sizeof(float));
  for (std::size_t yy = 0; yy < height; ++yy) {
    in.read(row.data(), static_cast<std::streamsize>(row.size()));
    if (!in) throw DataError("truncated PFM raster in " + path.string());
    const std::size_t y = height - 1 - yy;
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        std::uint32_t bits;
        std::memcpy(&bits, row.data() + (x * channels + c) * sizeof(float), sizeof(bits));
        const bool swap = little != (std::endian::native == std::endian::little);
        if (swap) {
          bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) | (bits >> 24);
        }
        image.at(c, y, x) = std::bit_cast<float>(bits);
      }
    }
  }
  return image;
}

}  // namespace rsvqa
