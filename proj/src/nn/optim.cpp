#include "rsvqa/nn/optim.hpp"

#include <cmath>

namespace rsvqa::nn {

Adam::Adam(ParameterList params, AdamOptions options) : options_(options) {
  for (auto& p : params) {
    if (!p.tensor.requires_grad()) continue;
    slots_.push_back({p.tensor, std::vector<double>(p.tensor.numel(), 0.0),
                      std::vector<double>(p.tensor.numel(), 0.0)});
  }
}

void Adam::zero_grad() {
  for (auto& s : slots_) s.param.zero_grad();
}

void Adam::step() {
  ++step_count_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_count_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_count_));
  for (auto& s : slots_) {
    if (!s.param.requires_grad() || !s.param.has_grad()) continue;
    auto value = s.param.data();
    auto grad = s.param.grad();
    for (std::size_t i = 0; i < value.size(); ++i) {
      s.m[i] = options_.beta1 * s.m[i] + (1.0 - options_.beta1) * grad[i];
      s.v[i] = options_.beta2 * s.v[i] + (1.0 - options_.beta2) * grad[i] * grad[i];
      value[i] -= options_.learning_rate * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + options_.epsilon);
    }
  }
}

}  // namespace rsvqa::nn
