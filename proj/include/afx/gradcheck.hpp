#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "afx/tensor.hpp"

namespace afx {

struct GradCheckReport {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Compares analytic gradients of loss_fn with central finite differences over
// every element of the listed tensors. loss_fn must rebuild its graph from the
// tensors' current values on each call.
double finite_diff_max_rel_error(const std::function<Tensor()>& loss_fn,
                                 const std::vector<Tensor>& wrt, double step = 1e-5);

// 64-bit finite-difference checks for every registered differentiable
// operation and module, at small dimensions.
std::vector<GradCheckReport> run_standard_gradchecks(std::uint64_t seed, double tolerance = 1e-4);

}  // namespace afx
