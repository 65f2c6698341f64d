#pragma once

#include "mtopo/nn/tensor.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace mtopo::nn {

struct GradCheckOptions {
  int probes = 200;
  double eps = 1e-5;
  // Denominator floor: |a - n| / max(|a|, |n|, floor). Keeps coordinates whose
  // true gradient is ~0 from turning finite-difference noise into a failure.
  double floor = 1e-7;
  // The floor also grows to noise_factor times the finite-difference rounding
  // noise of the probed coordinate.
  double noise_factor = 1e5;
  std::uint64_t seed = 1;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  int probes = 0;
};

/// Compares reverse-mode gradients of a scalar function with central
/// differences on randomly chosen coordinates of `params`. `loss` must rebuild
/// the graph from the current parameter values on every call.
GradCheckResult grad_check(const std::function<Var()>& loss, const std::vector<Var>& params,
                           const GradCheckOptions& opts = {});

}  // namespace mtopo::nn
