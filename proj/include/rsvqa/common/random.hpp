#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace rsvqa {

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Hex rendering of fnv1a64, 16 characters.
std::string content_hash(std::string_view bytes);

/// Stream seed for a named sub-task (patch id, class index, ...). Independent of
/// evaluation order, so work can be split across workers freely.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view key);
std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t key);

/// Seeded generator. Distribution transforms are written out here instead of
/// using <random> distributions, whose output is implementation-defined; the
/// same seed therefore produces the same bytes with any standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace rsvqa
