#include "rsvqa/corpus/split.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rsvqa/common/errors.hpp"

namespace rsvqa::corpus {

std::array<std::size_t, 3> split_sizes(std::size_t n, SplitFractions f) {
  if (!(f.train > 0.0 && f.val > 0.0 && f.test > 0.0)) throw InvalidInput("split fractions must be positive");
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9) throw InvalidInput("split fractions must sum to 1");
  const double total = static_cast<double>(n);
  const auto cut1 = static_cast<std::size_t>(std::llround(f.train * total));
  const auto cut2 = std::max(cut1, static_cast<std::size_t>(std::llround((f.train + f.val) * total)));
  return {cut1, std::min(cut2, n) - cut1, n - std::min(cut2, n)};
}

std::vector<Split> split_by_longitude(const std::vector<PatchRecord>& patches, SplitFractions fractions) {
  if (patches.empty()) throw InvalidInput("cannot split an empty patch list");
  const auto sizes = split_sizes(patches.size(), fractions);
  std::vector<std::size_t> order(patches.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (patches[a].lon != patches[b].lon) return patches[a].lon < patches[b].lon;
    return patches[a].patch_id < patches[b].patch_id;
  });
  std::vector<Split> out(patches.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    out[order[rank]] = rank < sizes[0] ? Split::train : (rank < sizes[0] + sizes[1] ? Split::val : Split::test);
  }
  return out;
}

}  // namespace rsvqa::corpus
