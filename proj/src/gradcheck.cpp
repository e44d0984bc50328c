#include "seqfuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace seqfuse {

namespace {

// A perturbed point whose evaluation fails (e.g. a non-finite intermediate)
// counts as non-finite rather than aborting the whole check.
double eval_or_nan(const std::function<double()>& f) {
  try {
    return f();
  } catch (const std::exception&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

GradCheckReport finite_diff_check(const std::function<double()>& f,
                                  const std::function<std::vector<MatX>()>& analytic,
                                  std::span<const Tensor* const> params, double step, double tol) {
  if (!(step > 0.0)) throw ArgumentError("finite_diff_check: step must be positive");
  const std::vector<MatX> grads = analytic();
  if (grads.size() != params.size()) throw ArgumentError("finite_diff_check: one gradient per parameter expected");

  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    // The harness perturbs values in place and restores them afterwards.
    MatX& value = const_cast<Tensor*>(params[p])->value();
    for (Index i = 0; i < value.size(); ++i) {
      const double saved = value(i);
      value(i) = saved + step;
      const double up = eval_or_nan(f);
      value(i) = saved - step;
      const double down = eval_or_nan(f);
      value(i) = saved;
      ++report.coords_checked;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        report.finite = false;
        continue;
      }
      const double numeric = (up - down) / (2.0 * step);
      const double a = grads[p](i);
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = p;
        report.worst_coord = i;
      }
    }
  }
  report.pass = report.finite && report.max_rel_err < tol;
  return report;
}

GradCheckReport finite_diff_check(const Objective& f, std::span<const Tensor* const> params, double step,
                                  double tol) {
  auto value = [&] {
    Graph g;
    return f(g).scalar();
  };
  auto analytic = [&] {
    for (const Tensor* t : params) t->zero_grad();
    Graph g;
    backward(f(g));
    std::vector<MatX> out;
    out.reserve(params.size());
    for (const Tensor* t : params) {
      if (!t->requires_grad()) throw ArgumentError("finite_diff_check: parameter does not require grad");
      out.push_back(t->grad());
    }
    return out;
  };
  return finite_diff_check(value, analytic, params, step, tol);
}

}  // namespace seqfuse
