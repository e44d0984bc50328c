#pragma once

// Attention encoder-decoder producing the per-token posteriors of the
// acoustic model.
//
// Encoder: stacked bidirectional gated recurrent layers over feature frames.
// Attention: MLP energies v . tanh(W_s s + W_h h_t + w_f f_t), where f_t is the
// attention mass position t has received so far (weight feedback).
// Decoder: one gated recurrent layer fed with [embedding(prev), context].
// Output: log_softmax([s, context] W_out).

#include "seqfuse/graph.hpp"
#include "seqfuse/tensor.hpp"

#include <cstdint>

namespace seqfuse {

struct AcousticModelDims {
  int vocab_size = 20;
  int feature_dim = 8;
  int embed_dim = 16;
  int hidden_dim = 32;
  int attention_dim = 32;
  int encoder_layers = 1;

  bool operator==(const AcousticModelDims&) const = default;
};

struct EncoderStates {
  Var states;     // T x 2H
  Var projected;  // T x A, states W_h, shared by every decoder step
  Index frames() const { return states.rows(); }
};

struct DecoderState {
  Var hidden;    // 1 x H
  Var context;   // 1 x 2H
  Var feedback;  // 1 x T, running sum of attention weights
};

struct Attention {
  Var context;  // 1 x 2H
  Var weights;  // 1 x T
};

struct AmStep {
  Var logprobs;  // 1 x V
  DecoderState state;
};

class AcousticModel {
 public:
  AcousticModel(const AcousticModelDims& dims, std::uint64_t seed);

  const AcousticModelDims& dims() const { return dims_; }
  int vocab_size() const { return dims_.vocab_size; }
  ParameterList& parameters() { return params_; }
  const ParameterList& parameters() const { return params_; }
  const Tensor& parameter(std::string_view name) const;

  EncoderStates encode(Graph& g, const MatX& feats) const;
  DecoderState initial_state(Graph& g, const EncoderStates& enc) const;

  /// Attention weights and context for decoder hidden state `query`; adds the
  /// weights to state.feedback.
  Attention attend(Graph& g, DecoderState& state, Var query, const EncoderStates& enc) const;

  /// One decoder step conditioned on `prev` (BOS at n = 1).
  AmStep step(Graph& g, const DecoderState& state, TokenId prev, const EncoderStates& enc) const;

  /// Teacher-forced N x V log-probabilities; row n conditions on tokens[0, n).
  Var sequence_logprobs(Graph& g, const EncoderStates& enc, const TokenSeq& tokens) const;

 private:
  struct GruIndex {
    std::size_t w_input, w_gates, w_cand;
  };

  std::size_t add_param(std::string name, Index rows, Index cols, Index fan_in, std::uint64_t seed);
  GruIndex add_gru(const std::string& prefix, Index input_dim, Index hidden, std::uint64_t seed);
  const Tensor& at(std::size_t i) const { return params_[i].tensor; }
  Var run_direction(Graph& g, Var inputs, const GruIndex& p, bool reverse) const;

  AcousticModelDims dims_;
  ParameterList params_;
  std::size_t embedding_ = 0;
  std::vector<std::pair<GruIndex, GruIndex>> encoder_;
  GruIndex decoder_{};
  std::size_t att_state_ = 0, att_enc_ = 0, att_feedback_ = 0, att_v_ = 0;
  std::size_t out_w_ = 0;
};

/// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] from the parameter's
/// own named stream.
Tensor init_uniform(Index rows, Index cols, Index fan_in, std::uint64_t seed, std::string_view name);

/// Copies parameter values (not gradients) between identically shaped models.
void copy_values(const ParameterList& from, ParameterList& to);

}  // namespace seqfuse
