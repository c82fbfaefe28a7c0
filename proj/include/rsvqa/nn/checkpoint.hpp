#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"

#include "rsvqa/nn/layers.hpp"

namespace rsvqa::nn {

struct StoredTensor {
  Shape shape;
  std::vector<double> values;
};

/// Self-describing model container: a JSON header (config echo plus any
/// metadata the model needs to rebuild itself) followed by named tensors.
///
/// Layout: "RSVQACK1" | u64 header length | header JSON | u64 tensor count |
/// per tensor: u64 name length, name, u64 rank, u64 dims..., f64 values.
/// Integers and floats are little-endian.
struct Checkpoint {
  nlohmann::json header;
  std::map<std::string, StoredTensor> tensors;

  static Checkpoint capture(nlohmann::json header, const ParameterList& params);

  /// Copies stored values into `params`. Every parameter must be present with
  /// a matching shape; otherwise a DataError names the offender.
  void restore(const ParameterList& params) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rsvqa::nn
