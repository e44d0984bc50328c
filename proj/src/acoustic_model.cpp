#include "seqfuse/acoustic_model.hpp"

#include "seqfuse/rng.hpp"

#include <cmath>

namespace seqfuse {

Tensor init_uniform(Index rows, Index cols, Index fan_in, std::uint64_t seed, std::string_view name) {
  Rng rng = rng_stream(seed, name);
  const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-s, s);
  MatX m(rows, cols);
  // Row-major fill so the draw order does not depend on Eigen's storage order.
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return Tensor(std::move(m), true);
}

void copy_values(const ParameterList& from, ParameterList& to) {
  if (from.size() != to.size()) throw ArgumentError("copy_values: parameter lists differ in size");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].name != to[i].name || from[i].tensor.rows() != to[i].tensor.rows() ||
        from[i].tensor.cols() != to[i].tensor.cols())
      throw ArgumentError("copy_values: parameter " + from[i].name + " does not match " + to[i].name);
    to[i].tensor.value() = from[i].tensor.value();
  }
}

std::size_t AcousticModel::add_param(std::string name, Index rows, Index cols, Index fan_in, std::uint64_t seed) {
  Tensor t = init_uniform(rows, cols, fan_in, seed, "am." + name);
  params_.push_back({std::move(name), std::move(t)});
  return params_.size() - 1;
}

AcousticModel::GruIndex AcousticModel::add_gru(const std::string& prefix, Index input_dim, Index hidden,
                                               std::uint64_t seed) {
  const Index fan_in = input_dim + hidden;
  GruIndex idx;
  idx.w_input = add_param(prefix + ".w_input", input_dim, 3 * hidden, fan_in, seed);
  idx.w_gates = add_param(prefix + ".w_gates", hidden, 2 * hidden, fan_in, seed);
  idx.w_cand = add_param(prefix + ".w_cand", hidden, hidden, fan_in, seed);
  return idx;
}

AcousticModel::AcousticModel(const AcousticModelDims& dims, std::uint64_t seed) : dims_(dims) {
  if (dims.vocab_size < 1 || dims.feature_dim < 1 || dims.embed_dim < 1 || dims.hidden_dim < 1 ||
      dims.attention_dim < 1 || dims.encoder_layers < 1)
    throw ArgumentError("AcousticModel: all dimensions must be positive");
  const Index v = dims.vocab_size;
  const Index h = dims.hidden_dim;
  const Index a = dims.attention_dim;

  // One extra embedding row for BOS.
  embedding_ = add_param("embedding", v + 1, dims.embed_dim, v + 1, seed);
  Index input_dim = dims.feature_dim;
  for (int l = 0; l < dims.encoder_layers; ++l) {
    const std::string prefix = "enc.l" + std::to_string(l);
    GruIndex fwd = add_gru(prefix + ".fwd", input_dim, h, seed);
    GruIndex bwd = add_gru(prefix + ".bwd", input_dim, h, seed);
    encoder_.emplace_back(fwd, bwd);
    input_dim = 2 * h;
  }
  decoder_ = add_gru("dec", dims.embed_dim + 2 * h, h, seed);
  att_state_ = add_param("att.w_state", h, a, h, seed);
  att_enc_ = add_param("att.w_enc", 2 * h, a, 2 * h, seed);
  att_feedback_ = add_param("att.w_feedback", 1, a, 1, seed);
  att_v_ = add_param("att.v", a, 1, a, seed);
  out_w_ = add_param("out.w", 3 * h, v, 3 * h, seed);
}

const Tensor& AcousticModel::parameter(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.tensor;
  throw ArgumentError("AcousticModel: no parameter named " + std::string(name));
}

Var AcousticModel::run_direction(Graph& g, Var inputs, const GruIndex& p, bool reverse) const {
  const Index frames = inputs.rows();
  const Var proj = matmul(inputs, g.param(at(p.w_input)));
  const Var w_gates = g.param(at(p.w_gates));
  const Var w_cand = g.param(at(p.w_cand));
  Var h = g.constant(MatX::Zero(1, dims_.hidden_dim));
  std::vector<Var> out(static_cast<std::size_t>(frames));
  for (Index i = 0; i < frames; ++i) {
    const Index t = reverse ? frames - 1 - i : i;
    h = gru_cell(proj, t, h, w_gates, w_cand);
    out[static_cast<std::size_t>(t)] = h;
  }
  return concat_rows(out);
}

EncoderStates AcousticModel::encode(Graph& g, const MatX& feats) const {
  if (feats.rows() == 0) throw ArgumentError("encode: empty utterance (T == 0)");
  if (feats.cols() != dims_.feature_dim)
    throw DimensionError("encode: expected " + std::to_string(dims_.feature_dim) + " feature dims, got " +
                         std::to_string(feats.cols()));
  Var x = g.constant(feats);
  for (const auto& [fwd, bwd] : encoder_) x = concat_cols(run_direction(g, x, fwd, false), run_direction(g, x, bwd, true));
  return {x, matmul(x, g.param(at(att_enc_)))};
}

DecoderState AcousticModel::initial_state(Graph& g, const EncoderStates& enc) const {
  return {g.constant(MatX::Zero(1, dims_.hidden_dim)), g.constant(MatX::Zero(1, 2 * dims_.hidden_dim)),
          g.constant(MatX::Zero(1, enc.frames()))};
}

Attention AcousticModel::attend(Graph& g, DecoderState& state, Var query, const EncoderStates& enc) const {
  const Var from_state = matmul(query, g.param(at(att_state_)));
  const Var from_feedback = matmul(transpose(state.feedback), g.param(at(att_feedback_)));
  const Var hidden = tanh(add_row(enc.projected + from_feedback, from_state));
  const Var energies = transpose(matmul(hidden, g.param(at(att_v_))));
  const Var weights = exp(log_softmax(energies));
  state.feedback = state.feedback + weights;
  return {matmul(weights, enc.states), weights};
}

AmStep AcousticModel::step(Graph& g, const DecoderState& state, TokenId prev, const EncoderStates& enc) const {
  if (prev == kEos) throw ArgumentError("am_step: cannot condition on EOS, sequences are terminal");
  if (prev != kBos && (prev < 0 || prev >= dims_.vocab_size))
    throw ArgumentError("am_step: token id " + std::to_string(prev) + " outside vocabulary of size " +
                        std::to_string(dims_.vocab_size));
  const Index row = prev == kBos ? dims_.vocab_size : prev;
  const Var emb = slice_rows(g.param(at(embedding_)), row, 1);
  const Var proj = matmul(concat_cols(emb, state.context), g.param(at(decoder_.w_input)));
  DecoderState next = state;
  next.hidden = gru_cell(proj, 0, state.hidden, g.param(at(decoder_.w_gates)), g.param(at(decoder_.w_cand)));
  next.context = attend(g, next, next.hidden, enc).context;
  const Var logits = matmul(concat_cols(next.hidden, next.context), g.param(at(out_w_)));
  return {log_softmax(logits), next};
}

Var AcousticModel::sequence_logprobs(Graph& g, const EncoderStates& enc, const TokenSeq& tokens) const {
  if (!is_eos_terminated(tokens)) throw ArgumentError("am_sequence_logprobs: tokens must end with (only one) EOS");
  std::vector<Var> rows;
  rows.reserve(tokens.size());
  DecoderState state = initial_state(g, enc);
  TokenId prev = kBos;
  for (TokenId w : tokens) {
    AmStep s = step(g, state, prev, enc);
    rows.push_back(s.logprobs);
    state = s.state;
    prev = w;
  }
  return concat_rows(rows);
}

}  // namespace seqfuse
