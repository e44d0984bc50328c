#pragma once

#include "seqfuse/types.hpp"

#include <string>
#include <vector>

namespace seqfuse {

/// Dense real array of rank 1 or 2 with a gradient slot.
///
/// Rank-1 tensors are stored as a single row. The gradient is accumulation
/// state written by Graph::backward, so it stays writable through const
/// references: a model is read-only during a forward/backward pass while its
/// gradient slots collect adjoints.
class Tensor {
 public:
  Tensor() = default;
  Tensor(MatX value, bool requires_grad = false, int rank = 2);

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false);
  static Tensor vector(const RowVecX& v, bool requires_grad = false);

  std::vector<std::size_t> shape() const;
  int rank() const { return rank_; }
  Index rows() const { return value_.rows(); }
  Index cols() const { return value_.cols(); }
  Index size() const { return value_.size(); }

  const MatX& value() const { return value_; }
  MatX& value() { return value_; }

  MatX& grad() const { return grad_; }
  void zero_grad() const { grad_.setZero(value_.rows(), value_.cols()); }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

 private:
  MatX value_;
  mutable MatX grad_;
  bool requires_grad_ = false;
  int rank_ = 2;
};

/// A model parameter: a tensor under a stable, checkpointable name.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedTensor>;

std::size_t parameter_count(const ParameterList& params);
void zero_grads(const ParameterList& params);
void set_requires_grad(ParameterList& params, bool on);

}  // namespace seqfuse
