#include "seqfuse/graph.hpp"

#include "seqfuse/kernels.hpp"

#include <sstream>

namespace seqfuse {

namespace {

std::string shape_str(const MatX& m) {
  std::ostringstream os;
  os << '[' << m.rows() << 'x' << m.cols() << ']';
  return os.str();
}

Graph& common_graph(Var a, Var b) {
  if (!a.valid() || !b.valid() || &a.graph() != &b.graph())
    throw ArgumentError("operands belong to different graphs");
  return a.graph();
}

void require_same_shape(const char* op, const MatX& a, const MatX& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

const MatX& Var::value() const { return graph_->value(id_); }
const MatX& Var::grad() const { return graph_->grad(id_); }

double Var::scalar() const {
  const MatX& v = value();
  if (v.size() != 1) throw ArgumentError("scalar(): tensor of shape " + shape_str(v) + " is not a scalar");
  return v(0, 0);
}

const MatX& Graph::value(int id) const {
  const Node& n = nodes_[id];
  return n.leaf ? n.leaf->value() : n.value;
}

Var Graph::push(Node node) {
  if (!node.leaf && !all_finite(node.value))
    throw ArgumentError("non-finite value produced by graph op " + std::to_string(static_cast<int>(node.op)));
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::param(const Tensor& t) {
  if (auto it = leaf_ids_.find(&t); it != leaf_ids_.end()) return Var(this, it->second);
  Node n{.op = Op::kLeaf};
  n.leaf = &t;
  n.needs_grad = t.requires_grad();
  Var v = push(std::move(n));
  leaf_ids_.emplace(&t, v.id());
  return v;
}

Var Graph::constant(MatX value) {
  Node n{.op = Op::kConstant};
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::scalar(double v) { return constant(MatX::Constant(1, 1, v)); }

MatX& Graph::grad_slot(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    const MatX& v = value(id);
    n.grad.setZero(v.rows(), v.cols());
  }
  return n.grad;
}

void Graph::backward(Var root) {
  if (&root.graph() != this) throw ArgumentError("backward: root belongs to another graph");
  const MatX& rv = value(root.id());
  if (rv.size() != 1) throw ArgumentError("backward: root of shape " + shape_str(rv) + " is not a scalar");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  grad_slot(root.id()).setOnes();
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    backprop(n);
  }
}

void Graph::backprop(Node& n) {
  const MatX& g = n.grad;
  switch (n.op) {
    case Op::kLeaf:
      if (n.leaf->requires_grad()) {
        MatX& tg = n.leaf->grad();
        if (tg.rows() != g.rows() || tg.cols() != g.cols()) tg.setZero(g.rows(), g.cols());
        tg += g;
      }
      break;
    case Op::kConstant:
      break;
    case Op::kMatMul:
      if (nodes_[n.in0].needs_grad) grad_slot(n.in0).noalias() += g * value(n.in1).transpose();
      if (nodes_[n.in1].needs_grad) grad_slot(n.in1).noalias() += value(n.in0).transpose() * g;
      break;
    case Op::kAdd:
      if (nodes_[n.in0].needs_grad) grad_slot(n.in0) += g;
      if (nodes_[n.in1].needs_grad) grad_slot(n.in1) += g;
      break;
    case Op::kAddRow:
      if (nodes_[n.in0].needs_grad) grad_slot(n.in0) += g;
      if (nodes_[n.in1].needs_grad) grad_slot(n.in1) += g.colwise().sum();
      break;
    case Op::kSub:
      if (nodes_[n.in0].needs_grad) grad_slot(n.in0) += g;
      if (nodes_[n.in1].needs_grad) grad_slot(n.in1) -= g;
      break;
    case Op::kMul:
      if (nodes_[n.in0].needs_grad) grad_slot(n.in0).array() += g.array() * value(n.in1).array();
      if (nodes_[n.in1].needs_grad) grad_slot(n.in1).array() += g.array() * value(n.in0).array();
      break;
    case Op::kScale:
      grad_slot(n.in0) += n.scalar * g;
      break;
    case Op::kAddScalar:
      grad_slot(n.in0) += g;
      break;
    case Op::kTanh:
      grad_slot(n.in0).array() += g.array() * (1.0 - n.value.array().square());
      break;
    case Op::kSigmoid:
      grad_slot(n.in0).array() += g.array() * n.value.array() * (1.0 - n.value.array());
      break;
    case Op::kExp:
      grad_slot(n.in0).array() += g.array() * n.value.array();
      break;
    case Op::kLogSoftmax: {
      // d/dx_j of (x_i - lse(x)) summed against g: g_j - softmax_j * sum(g).
      const MatX p = n.value.array().exp().matrix();
      MatX& gi = grad_slot(n.in0);
      for (Index r = 0; r < g.rows(); ++r) gi.row(r) += g.row(r) - p.row(r) * g.row(r).sum();
      break;
    }
    case Op::kLogSumExp: {
      const MatX& x = value(n.in0);
      MatX& gi = grad_slot(n.in0);
      if (n.i0 == 0) {  // per row
        for (Index r = 0; r < x.rows(); ++r)
          gi.row(r).array() += g(r, 0) * (x.row(r).array() - n.value(r, 0)).exp();
      } else {
        for (Index c = 0; c < x.cols(); ++c)
          gi.col(c).array() += g(0, c) * (x.col(c).array() - n.value(0, c)).exp();
      }
      break;
    }
    case Op::kSum:
      grad_slot(n.in0).array() += g(0, 0);
      break;
    case Op::kGather: {
      MatX& gi = grad_slot(n.in0);
      for (std::size_t r = 0; r < n.indices.size(); ++r) gi(static_cast<Index>(r), n.indices[r]) += g(static_cast<Index>(r), 0);
      break;
    }
    case Op::kConcatCols: {
      const Index ca = value(n.in0).cols();
      if (nodes_[n.in0].needs_grad) grad_slot(n.in0) += g.leftCols(ca);
      if (nodes_[n.in1].needs_grad) grad_slot(n.in1) += g.rightCols(g.cols() - ca);
      break;
    }
    case Op::kConcatRows: {
      Index r = 0;
      for (int id : n.inputs) {
        const Index rows = value(id).rows();
        if (nodes_[id].needs_grad) grad_slot(id) += g.middleRows(r, rows);
        r += rows;
      }
      break;
    }
    case Op::kSliceRows:
      grad_slot(n.in0).middleRows(n.i0, n.i1) += g;
      break;
    case Op::kSliceCols:
      grad_slot(n.in0).middleCols(n.i0, n.i1) += g;
      break;
    case Op::kTranspose:
      grad_slot(n.in0) += g.transpose();
      break;
    case Op::kGruCell: {
      // saved = [z r c r*h], each 1 x H.
      const Index hd = g.cols();
      const auto z = n.saved.middleCols(0, hd).array();
      const auto r = n.saved.middleCols(hd, hd).array();
      const auto c = n.saved.middleCols(2 * hd, hd).array();
      const auto rh = n.saved.middleCols(3 * hd, hd);
      const MatX& h = value(n.in1);
      const MatX& wg = value(n.in2);
      const MatX& wc = value(n.in3);

      RowVecX dh = g.array() * (1.0 - z);
      const RowVecX dz = g.array() * (c - h.array());
      const RowVecX dac = g.array() * z * (1.0 - c.square());
      const RowVecX drh = dac * wc.transpose();
      dh.array() += drh.array() * r;
      RowVecX dgates(2 * hd);
      dgates.leftCols(hd) = dz.array() * z * (1.0 - z);
      dgates.rightCols(hd) = (drh.array() * h.array()) * r * (1.0 - r);
      dh.noalias() += dgates * wg.transpose();

      if (nodes_[n.in0].needs_grad) {
        auto row = grad_slot(n.in0).row(n.i0);
        row.head(2 * hd) += dgates;
        row.tail(hd) += dac;
      }
      if (nodes_[n.in1].needs_grad) grad_slot(n.in1) += dh;
      if (nodes_[n.in2].needs_grad) grad_slot(n.in2).noalias() += h.transpose() * dgates;
      if (nodes_[n.in3].needs_grad) grad_slot(n.in3).noalias() += rh.transpose() * dac;
      break;
    }
  }
}

Var matmul(Var a, Var b) {
  Graph& g = common_graph(a, b);
  const MatX& av = a.value();
  const MatX& bv = b.value();
  if (av.cols() != bv.rows())
    throw DimensionError("matmul: inner extents differ, " + shape_str(av) + " x " + shape_str(bv));
  Graph::Node n{.op = Graph::Op::kMatMul};
  n.in0 = a.id();
  n.in1 = b.id();
  n.needs_grad = g.needs(a) || g.needs(b);
  n.value.noalias() = av * bv;
  return g.push(std::move(n));
}

Var add(Var a, Var b) {
  Graph& g = common_graph(a, b);
  require_same_shape("add", a.value(), b.value());
  Graph::Node n{.op = Graph::Op::kAdd};
  n.in0 = a.id();
  n.in1 = b.id();
  n.needs_grad = g.needs(a) || g.needs(b);
  n.value = a.value() + b.value();
  return g.push(std::move(n));
}

Var add_row(Var a, Var row) {
  Graph& g = common_graph(a, row);
  const MatX& av = a.value();
  const MatX& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols())
    throw DimensionError("add_row: cannot broadcast " + shape_str(rv) + " over " + shape_str(av));
  Graph::Node n{.op = Graph::Op::kAddRow};
  n.in0 = a.id();
  n.in1 = row.id();
  n.needs_grad = g.needs(a) || g.needs(row);
  n.value = av.rowwise() + rv.row(0);
  return g.push(std::move(n));
}

Var sub(Var a, Var b) {
  Graph& g = common_graph(a, b);
  require_same_shape("sub", a.value(), b.value());
  Graph::Node n{.op = Graph::Op::kSub};
  n.in0 = a.id();
  n.in1 = b.id();
  n.needs_grad = g.needs(a) || g.needs(b);
  n.value = a.value() - b.value();
  return g.push(std::move(n));
}

Var mul(Var a, Var b) {
  Graph& g = common_graph(a, b);
  require_same_shape("mul", a.value(), b.value());
  Graph::Node n{.op = Graph::Op::kMul};
  n.in0 = a.id();
  n.in1 = b.id();
  n.needs_grad = g.needs(a) || g.needs(b);
  n.value = a.value().cwiseProduct(b.value());
  return g.push(std::move(n));
}

Graph::Node Graph::make_node(Op op, Var a, Var b) const {
  Node n{.op = op};
  n.in0 = a.id();
  n.needs_grad = nodes_[a.id()].needs_grad;
  if (b.valid()) {
    n.in1 = b.id();
    n.needs_grad = n.needs_grad || nodes_[b.id()].needs_grad;
  }
  return n;
}

Var scale(Var a, double c) {
  Graph& g = a.graph();
  auto n = g.make_node(Graph::Op::kScale, a);
  n.scalar = c;
  n.value = c * a.value();
  return g.push(std::move(n));
}

Var add_scalar(Var a, double c) {
  Graph& g = a.graph();
  auto n = g.make_node(Graph::Op::kAddScalar, a);
  n.value = a.value().array() + c;
  return g.push(std::move(n));
}

Var tanh(Var a) {
  Graph& g = a.graph();
  auto n = g.make_node(Graph::Op::kTanh, a);
  n.value = a.value().array().tanh();
  return g.push(std::move(n));
}

Var sigmoid(Var a) {
  Graph& g = a.graph();
  auto n = g.make_node(Graph::Op::kSigmoid, a);
  n.value = (1.0 + (-a.value().array()).exp()).inverse();
  return g.push(std::move(n));
}

Var exp(Var a) {
  Graph& g = a.graph();
  auto n = g.make_node(Graph::Op::kExp, a);
  n.value = a.value().array().exp();
  return g.push(std::move(n));
}

Var log_softmax(Var logits) {
  Graph& g = logits.graph();
  if (logits.cols() < 1) throw ArgumentError("log_softmax: empty vocabulary axis");
  auto n = g.make_node(Graph::Op::kLogSoftmax, logits);
  n.value = log_softmax_rows(logits.value());
  return g.push(std::move(n));
}

Var logsumexp(Var x, Axis axis) {
  Graph& g = x.graph();
  const MatX& xv = x.value();
  auto n = g.make_node(Graph::Op::kLogSumExp, x);
  if (axis == Axis::kCols) {
    n.i0 = 0;
    n.value = logsumexp_rows(xv);
  } else {
    if (xv.rows() == 0) throw ArgumentError("logsumexp: empty reduction axis");
    n.i0 = 1;
    n.value = logsumexp_rows(xv.transpose()).transpose();
  }
  return g.push(std::move(n));
}

Var sum(Var a) {
  Graph& g = a.graph();
  auto n = g.make_node(Graph::Op::kSum, a);
  n.value = MatX::Constant(1, 1, a.value().sum());
  return g.push(std::move(n));
}

Var gather_logprob(Var logprobs, std::span<const TokenId> indices) {
  Graph& g = logprobs.graph();
  const MatX& lp = logprobs.value();
  if (static_cast<Index>(indices.size()) != lp.rows())
    throw DimensionError("gather_logprob: " + std::to_string(indices.size()) + " indices for " +
                         shape_str(lp) + " log-probs");
  auto n = g.make_node(Graph::Op::kGather, logprobs);
  n.value.resize(lp.rows(), 1);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const TokenId w = indices[r];
    if (w < 0 || w >= lp.cols())
      throw ArgumentError("gather_logprob: index " + std::to_string(w) + " at position " + std::to_string(r) +
                          " outside [0, " + std::to_string(lp.cols()) + ")");
    n.value(static_cast<Index>(r), 0) = lp(static_cast<Index>(r), w);
  }
  n.indices.assign(indices.begin(), indices.end());
  return g.push(std::move(n));
}

Var concat_cols(Var a, Var b) {
  Graph& g = common_graph(a, b);
  const MatX& av = a.value();
  const MatX& bv = b.value();
  if (av.rows() != bv.rows())
    throw DimensionError("concat_cols: row counts differ, " + shape_str(av) + " vs " + shape_str(bv));
  auto n = g.make_node(Graph::Op::kConcatCols, a, b);
  n.value.resize(av.rows(), av.cols() + bv.cols());
  n.value << av, bv;
  return g.push(std::move(n));
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat_rows: nothing to concatenate");
  Graph& g = parts.front().graph();
  const Index cols = parts.front().cols();
  Index rows = 0;
  Graph::Node n{.op = Graph::Op::kConcatRows};
  for (const Var& p : parts) {
    if (&p.graph() != &g) throw ArgumentError("operands belong to different graphs");
    if (p.cols() != cols)
      throw DimensionError("concat_rows: column counts differ, " + shape_str(parts.front().value()) + " vs " +
                           shape_str(p.value()));
    rows += p.rows();
    n.inputs.push_back(p.id());
    n.needs_grad = n.needs_grad || g.needs(p);
  }
  n.value.resize(rows, cols);
  Index r = 0;
  for (const Var& p : parts) {
    n.value.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return g.push(std::move(n));
}

Var slice_rows(Var a, Index start, Index count) {
  Graph& g = a.graph();
  if (start < 0 || count < 0 || start + count > a.rows())
    throw DimensionError("slice_rows: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") outside " + shape_str(a.value()));
  auto n = g.make_node(Graph::Op::kSliceRows, a);
  n.i0 = start;
  n.i1 = count;
  n.value = a.value().middleRows(start, count);
  return g.push(std::move(n));
}

Var slice_cols(Var a, Index start, Index count) {
  Graph& g = a.graph();
  if (start < 0 || count < 0 || start + count > a.cols())
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") outside " + shape_str(a.value()));
  auto n = g.make_node(Graph::Op::kSliceCols, a);
  n.i0 = start;
  n.i1 = count;
  n.value = a.value().middleCols(start, count);
  return g.push(std::move(n));
}

Var transpose(Var a) {
  Graph& g = a.graph();
  auto n = g.make_node(Graph::Op::kTranspose, a);
  n.value = a.value().transpose();
  return g.push(std::move(n));
}

Var gru_cell(Var input_proj, Index row, Var h, Var w_gates, Var w_cand) {
  Graph& g = common_graph(input_proj, h);
  const MatX& xp = input_proj.value();
  const MatX& hv = h.value();
  const MatX& wg = w_gates.value();
  const MatX& wc = w_cand.value();
  const Index hd = hv.cols();
  if (hv.rows() != 1 || xp.cols() != 3 * hd || row < 0 || row >= xp.rows() || wg.rows() != hd ||
      wg.cols() != 2 * hd || wc.rows() != hd || wc.cols() != hd)
    throw DimensionError("gru_cell: inconsistent shapes, input " + shape_str(xp) + ", state " + shape_str(hv) +
                         ", gates " + shape_str(wg) + ", candidate " + shape_str(wc));

  Graph::Node n{.op = Graph::Op::kGruCell};
  n.in0 = input_proj.id();
  n.in1 = h.id();
  n.in2 = w_gates.id();
  n.in3 = w_cand.id();
  n.i0 = row;
  n.needs_grad = g.needs(input_proj) || g.needs(h) || g.needs(w_gates) || g.needs(w_cand);

  const RowVecX gates = xp.row(row).head(2 * hd) + hv * wg;
  const RowVecX zr = (1.0 + (-gates.array()).exp()).inverse();
  const RowVecX rh = zr.tail(hd).cwiseProduct(hv.row(0));
  const RowVecX c = (xp.row(row).tail(hd) + rh * wc).array().tanh();
  const auto z = zr.head(hd).array();
  n.value = ((1.0 - z) * hv.row(0).array() + z * c.array()).matrix();
  n.saved.resize(1, 4 * hd);
  n.saved << zr, c, rh;
  return g.push(std::move(n));
}

}  // namespace seqfuse
