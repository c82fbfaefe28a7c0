#pragma once

// Central finite-difference oracle for autograd. Lives in test code only so it
// stays independent of the analytic backward passes it checks.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "rsvqa/nn/tensor.hpp"

namespace rsvqa::testing {

inline std::string fmt_sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6e", v);
  return buf;
}

struct GradCheckResult {
  double worst_relative = 0.0;
  std::string worst_location;
  std::size_t checked = 0;
};

/// Compares analytic gradients of `loss()` w.r.t. each tensor in `inputs` with
/// central differences. The relative error is |a - n| / max(|a|, |n|), with
/// pairs whose magnitude is below `floor` compared absolutely against it.
inline GradCheckResult gradient_check(const std::function<nn::Tensor()>& loss, std::vector<nn::Tensor> inputs,
                                      double step = 1e-6, double floor = 1e-6, std::size_t max_per_tensor = 64) {
  for (auto& t : inputs) t.zero_grad();
  nn::Tensor l = loss();
  l.backward();
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    analytic.emplace_back(t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                       : std::vector<double>(t.numel(), 0.0));
  }
  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].data();
    const std::size_t stride = std::max<std::size_t>(1, values.size() / max_per_tensor);
    for (std::size_t i = 0; i < values.size(); i += stride) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss().item();
      values[i] = saved - step;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      const double scale = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / scale;
      ++result.checked;
      if (rel > result.worst_relative) {
        result.worst_relative = rel;
        result.worst_location = "input " + std::to_string(k) + " element " + std::to_string(i) +
                                " analytic=" + fmt_sci(a) + " numeric=" + fmt_sci(numeric);
      }
    }
  }
  return result;
}

}  // namespace rsvqa::testing
