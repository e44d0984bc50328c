#pragma once

// Define-by-run reverse-mode differentiation over dense matrices.
//
// A Graph records every primitive as it executes; Var is a lightweight
// handle into it. backward() replays adjoints once, in reverse recording
// order, and accumulates parameter gradients into Tensor::grad().

#include "seqfuse/tensor.hpp"
#include "seqfuse/types.hpp"

#include <deque>
#include <span>
#include <unordered_map>
#include <vector>

namespace seqfuse {

class Graph;

class Var {
 public:
  Var() = default;
  Var(Graph* graph, int id) : graph_(graph), id_(id) {}

  bool valid() const { return graph_ != nullptr; }
  Graph& graph() const { return *graph_; }
  int id() const { return id_; }

  const MatX& value() const;
  const MatX& grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

enum class Axis { kRows, kCols };

class Graph {
 public:
  enum class Op : std::uint8_t {
    kLeaf,
    kConstant,
    kMatMul,
    kAdd,
    kAddRow,
    kSub,
    kMul,
    kScale,
    kAddScalar,
    kTanh,
    kSigmoid,
    kExp,
    kLogSoftmax,
    kLogSumExp,
    kSum,
    kGather,
    kConcatCols,
    kConcatRows,
    kSliceRows,
    kSliceCols,
    kTranspose,
    kGruCell,
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf bound to a parameter. Repeated calls for the same tensor return
  /// the same node, so adjoints from every use meet in one place.
  Var param(const Tensor& t);
  Var constant(MatX value);
  Var scalar(double v);

  std::size_t size() const { return nodes_.size(); }
  const MatX& value(int id) const;
  const MatX& grad(int id) const { return nodes_[id].grad; }

  void backward(Var root);

 private:
  struct Node {
    Op op;
    bool needs_grad = false;
    int in0 = -1, in1 = -1, in2 = -1, in3 = -1;
    std::vector<int> inputs;  // n-ary ops only
    MatX value;
    MatX grad;
    MatX saved;
    const Tensor* leaf = nullptr;
    double scalar = 0.0;
    Index i0 = 0, i1 = 0;
    std::vector<int> indices;
  };

  Var push(Node node);
  Node make_node(Op op, Var a, Var b = {}) const;
  Node& node(Var v) { return nodes_[v.id()]; }
  bool needs(Var v) const { return nodes_[v.id()].needs_grad; }
  MatX& grad_slot(int id);
  void backprop(Node& n);

  std::deque<Node> nodes_;
  std::unordered_map<const Tensor*, int> leaf_ids_;

  friend Var matmul(Var a, Var b);
  friend Var add(Var a, Var b);
  friend Var add_row(Var a, Var row);
  friend Var sub(Var a, Var b);
  friend Var mul(Var a, Var b);
  friend Var scale(Var a, double c);
  friend Var add_scalar(Var a, double c);
  friend Var tanh(Var a);
  friend Var sigmoid(Var a);
  friend Var exp(Var a);
  friend Var log_softmax(Var logits);
  friend Var logsumexp(Var x, Axis axis);
  friend Var sum(Var a);
  friend Var gather_logprob(Var logprobs, std::span<const TokenId> indices);
  friend Var concat_cols(Var a, Var b);
  friend Var concat_rows(std::span<const Var> parts);
  friend Var slice_rows(Var a, Index start, Index count);
  friend Var slice_cols(Var a, Index start, Index count);
  friend Var transpose(Var a);
  friend Var gru_cell(Var input_proj, Index row, Var h, Var w_gates, Var w_cand);
};

/// Matrix product; throws DimensionError naming both shapes on mismatch.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// a (m x n) plus a 1 x n row broadcast over every row of a.
Var add_row(Var a, Var row);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
/// Row-wise log_softmax over the last (column) axis.
Var log_softmax(Var logits);
/// Reduction: kCols reduces each row to one value (m x 1), kRows reduces each
/// column (1 x n).
Var logsumexp(Var x, Axis axis = Axis::kCols);
/// Sum of every coefficient, 1 x 1.
Var sum(Var a);
/// out[n] = logprobs[n, indices[n]], as an N x 1 column.
Var gather_logprob(Var logprobs, std::span<const TokenId> indices);
Var concat_cols(Var a, Var b);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, Index start, Index count);
Var slice_cols(Var a, Index start, Index count);
Var transpose(Var a);

/// One gated recurrent update with row-vector states:
///   z = sigmoid(x_z + h W_z), r = sigmoid(x_r + h W_r),
///   c = tanh(x_c + (r * h) W_c), h' = (1 - z) * h + z * c,
/// where [x_z x_r x_c] is row `row` of `input_proj` (already multiplied by
/// the input weights) and w_gates = [W_z W_r].
Var gru_cell(Var input_proj, Index row, Var h, Var w_gates, Var w_cand);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }

/// Runs the reverse sweep from a scalar root.
inline void backward(Var root) { root.graph().backward(root); }

}  // namespace seqfuse
