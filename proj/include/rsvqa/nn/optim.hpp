#pragma once

#include <vector>

#include "rsvqa/nn/layers.hpp"

namespace rsvqa::nn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam over the parameters that require gradients at step time. Tensors that
/// are frozen (requires_grad == false) are never written.
class Adam {
 public:
  Adam(ParameterList params, AdamOptions options);

  void zero_grad();
  void step();
  const AdamOptions& options() const { return options_; }

 private:
  struct Slot {
    Tensor param;
    std::vector<double> m;
    std::vector<double> v;
  };
  std::vector<Slot> slots_;
  AdamOptions options_;
  long step_count_ = 0;
};

}  // namespace rsvqa::nn
