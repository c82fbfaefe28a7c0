#pragma once

#include "rsvqa/common/image.hpp"

namespace rsvqa::corpus {

struct DbRange {
  double min_db;
  double max_db;
};

/// Clip bounds used to map backscatter in dB onto [0,1].
struct SarClipBounds {
  DbRange vv{-25.0, 0.0};
  DbRange vh{-30.0, -5.0};
};

/// Clips to the range and rescales linearly to [0,1].
float rescale_db(double value_db, DbRange range);
/// Inverse of rescale_db on [0,1].
double to_db(double normalized, DbRange range);

/// Builds the three-channel SAR composite from single-channel VV and VH images
/// in dB: channel 0 = rescaled VV, channel 1 = rescaled VH, channel 2 = the
/// per-patch min-max normalized difference VV_dB - VH_dB (0.5 everywhere when
/// the difference is constant). Throws InvalidInput on shape mismatch or
/// non-finite values.
Image compose_sar_channels(const Image& vv_db, const Image& vh_db, const SarClipBounds& bounds = {});

}  // namespace rsvqa::corpus
