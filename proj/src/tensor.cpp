#include "seqfuse/tensor.hpp"

namespace seqfuse {

Tensor::Tensor(MatX value, bool requires_grad, int rank)
    : value_(std::move(value)), requires_grad_(requires_grad), rank_(rank) {
  if (rank_ != 1 && rank_ != 2) throw ArgumentError("Tensor: rank must be 1 or 2");
  if (rank_ == 1 && value_.rows() != 1) throw DimensionError("Tensor: rank-1 tensors are stored as one row");
  grad_.setZero(value_.rows(), value_.cols());
}

Tensor Tensor::zeros(Index rows, Index cols, bool requires_grad) {
  return Tensor(MatX::Zero(rows, cols), requires_grad);
}

Tensor Tensor::vector(const RowVecX& v, bool requires_grad) { return Tensor(MatX(v), requires_grad, 1); }

std::vector<std::size_t> Tensor::shape() const {
  if (rank_ == 1) return {static_cast<std::size_t>(value_.cols())};
  return {static_cast<std::size_t>(value_.rows()), static_cast<std::size_t>(value_.cols())};
}

std::size_t parameter_count(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += static_cast<std::size_t>(p.tensor.size());
  return n;
}

void zero_grads(const ParameterList& params) {
  for (const auto& p : params) p.tensor.zero_grad();
}

void set_requires_grad(ParameterList& params, bool on) {
  for (auto& p : params) p.tensor.set_requires_grad(on);
}

}  // namespace seqfuse
