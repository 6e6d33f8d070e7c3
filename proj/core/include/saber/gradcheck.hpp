#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "saber/autodiff.hpp"
#include "saber/fusion.hpp"
#include "saber/params.hpp"

namespace saber {

struct GradCheckOptions {
  double eps = 1e-5;
  std::size_t samples = 200;  // coordinates checked; all of them if fewer exist
  std::uint64_t seed = 0;
  double floor = 1e-6;  // denominator floor of the relative error
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t coords = 0;
  std::string worst;  // "<param>[r,c]"
};

// Compares analytic gradients of `loss` (a scalar built on the given tape)
// with central differences at seeded random coordinates of `params`.
// rel = |a − n| / max(|a|, |n|, floor).
GradCheckResult grad_check(const std::function<ad::Var(ad::Tape&)>& loss, ParamSet& params,
                           const GradCheckOptions& opts = {});

// Full-model check on a 2-ICD toy (d=8, 2 heads, the default layer layout):
// total loss including sparsity and the task-guider penalty.
GradCheckResult toy_model_gradcheck(fusion::Mode mode, std::uint64_t seed,
                                    const GradCheckOptions& opts = {});

}  // namespace saber
