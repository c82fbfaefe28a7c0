#pragma once

#include <array>
#include <vector>

#include "rsvqa/corpus/records.hpp"

namespace rsvqa::corpus {

struct SplitFractions {
  double train = 0.66;
  double val = 0.11;
  double test = 0.23;
};

/// Geographic split: patches ordered west to east by (lon, patch_id); the
/// westernmost fraction goes to train, the easternmost to test, the rest to
/// val. Returns one Split per input patch, in input order.
std::vector<Split> split_by_longitude(const std::vector<PatchRecord>& patches, SplitFractions fractions = {});

/// Split counts for n items: cut points are rounded cumulative quantiles.
std::array<std::size_t, 3> split_sizes(std::size_t n, SplitFractions fractions);

}  // namespace rsvqa::corpus
