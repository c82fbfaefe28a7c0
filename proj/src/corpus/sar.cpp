#include "rsvqa/corpus/sar.hpp"

#include <algorithm>
#include <cmath>

#include "rsvqa/common/errors.hpp"

namespace rsvqa::corpus {

float rescale_db(double value_db, DbRange range) {
  const double clipped = std::clamp(value_db, range.min_db, range.max_db);
  return static_cast<float>((clipped - range.min_db) / (range.max_db - range.min_db));
}

double to_db(double normalized, DbRange range) {
  return range.min_db + std::clamp(normalized, 0.0, 1.0) * (range.max_db - range.min_db);
}

Image compose_sar_channels(const Image& vv_db, const Image& vh_db, const SarClipBounds& bounds) {
  if (vv_db.channels != 1 || vh_db.channels != 1) throw InvalidInput("VV and VH must be single-channel images");
  if (vv_db.height != vh_db.height || vv_db.width != vh_db.width) {
    throw InvalidInput("VV and VH shapes differ");
  }
  if (vv_db.empty()) throw InvalidInput("empty SAR image");
  if (bounds.vv.max_db <= bounds.vv.min_db || bounds.vh.max_db <= bounds.vh.min_db) {
    throw InvalidInput("SAR clip bounds must have max > min");
  }
  const std::size_t n = vv_db.plane_size();
  Image out(3, vv_db.height, vv_db.width);
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double vv = vv_db.data[i], vh = vh_db.data[i];
    if (!std::isfinite(vv) || !std::isfinite(vh)) throw InvalidInput("non-finite backscatter value");
    out.data[i] = rescale_db(vv, bounds.vv);
    out.data[n + i] = rescale_db(vh, bounds.vh);
    diff[i] = vv - vh;
  }
  const auto [lo, hi] = std::minmax_element(diff.begin(), diff.end());
  const double span = *hi - *lo;
  for (std::size_t i = 0; i < n; ++i) {
    out.data[2 * n + i] = span > 0.0 ? static_cast<float>((diff[i] - *lo) / span) : 0.5f;
  }
  return out;
}

}  // namespace rsvqa::corpus
