#pragma once

#include "seqfuse/graph.hpp"

#include <functional>
#include <span>
#include <string>

namespace seqfuse {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_param = 0;
  Index worst_coord = 0;
  std::size_t coords_checked = 0;
  bool finite = true;
  bool pass = false;
};

/// Builds the scalar objective inside the supplied graph from the current
/// parameter values.
using Objective = std::function<Var(Graph&)>;

/// Compares engine gradients against central differences
/// (f(x + eps e_i) - f(x - eps e_i)) / 2 eps, coordinate by coordinate, with
/// rel_err = |a - n| / max(|a|, |n|, 1e-8). Parameter values are restored.
GradCheckReport finite_diff_check(const Objective& f, std::span<const Tensor* const> params, double step,
                                  double tol);

/// Same comparison against an externally supplied analytic gradient, one
/// matrix per parameter. Used to exercise the harness itself.
GradCheckReport finite_diff_check(const std::function<double()>& f,
                                  const std::function<std::vector<MatX>()>& analytic,
                                  std::span<const Tensor* const> params, double step, double tol);

}  // namespace seqfuse
