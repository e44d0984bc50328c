#pragma once

// Stable log-domain kernels over Eigen dense expressions. These are the
// value-only building blocks; graph ops in graph.hpp call them on forward.

#include "seqfuse/types.hpp"

#include <cmath>
#include <limits>

namespace seqfuse {

/// log(sum(exp(x))) over every coefficient, with max subtraction.
template <typename Derived>
typename Derived::Scalar logsumexp(const Eigen::DenseBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.size() == 0) throw ArgumentError("logsumexp: empty reduction");
  const Scalar m = x.maxCoeff();
  if (m == -std::numeric_limits<Scalar>::infinity()) return m;
  return m + std::log((x.derived().array() - m).exp().sum());
}

/// Row-wise logsumexp: m x n -> m x 1.
template <typename Derived>
Matrix<typename Derived::Scalar> logsumexp_rows(const Eigen::MatrixBase<Derived>& x) {
  if (x.cols() == 0) throw ArgumentError("logsumexp_rows: empty reduction axis");
  Matrix<typename Derived::Scalar> out(x.rows(), 1);
  for (Index i = 0; i < x.rows(); ++i) out(i, 0) = logsumexp(x.row(i));
  return out;
}

/// Row-wise log_softmax; each output row satisfies logsumexp(row) == 0.
template <typename Derived>
Matrix<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  Matrix<typename Derived::Scalar> out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) out.row(i) = x.row(i).array() - logsumexp(x.row(i));
  return out;
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.derived().array().isFinite().all();
}

}  // namespace seqfuse
