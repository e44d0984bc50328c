#pragma once

// Training criteria over teacher-forced model outputs. Every loss is the
// negated log posterior of the reference under the respective model of the
// posterior, so all three are minimized.

#include "seqfuse/acoustic_model.hpp"
#include "seqfuse/graph.hpp"
#include "seqfuse/language_model.hpp"
#include "seqfuse/nbest.hpp"

namespace seqfuse {

/// AM scale alpha, LM scale beta, denominator scale gamma_den.
struct Scales {
  double alpha = 1.0;
  double beta = 0.0;
  double gamma_den = 1.0;

  double gamma_abs() const { return alpha; }
  /// beta / alpha; requires alpha > 0.
  double gamma_rel() const;
  static Scales from_gamma(double gamma_abs, double gamma_rel, double gamma_den = 1.0);
  void validate() const;
};

struct LossOutput {
  Var loss;                          // scalar, to minimize
  std::vector<double> per_position;  // numerator terms, one per position or hypothesis-free term
  double denominator = 0.0;          // log-domain normalization that was subtracted

  double value() const { return loss.scalar(); }
};

/// -sum_n am_logprobs[n, tokens[n]].
LossOutput ce_loss(Var am_logprobs, const TokenSeq& tokens);

/// -sum_n [alpha am[n,w_n] + beta lm[n,w_n] - logsumexp_w(alpha am[n,w] + beta lm[n,w])].
/// Both matrices must be teacher-forced on the reference history. Gradients
/// reach the LM only if its rows were computed from trainable parameters.
LossOutput local_fusion_loss(Var am_logprobs, Var lm_logprobs, const TokenSeq& tokens, const Scales& scales);

/// Sequence-level criterion with an n-best denominator:
///   -[alpha log P_AM(ref) + beta log P_LM(ref)
///     - gamma_den logsumexp_h(alpha log P_AM(h) + beta log P_LM(h))].
/// Every hypothesis is re-scored with a fresh teacher-forced pass; LM scores
/// are constants. `nbest` must contain the reference and no duplicates.
LossOutput mmi_loss(Graph& g, const AcousticModel& am, const LanguageModel& lm, const Utterance& utt,
                    const NBestList& nbest, const Scales& scales);

/// Same, reusing an encoder pass already recorded in `g`.
LossOutput mmi_loss(Graph& g, const AcousticModel& am, const LanguageModel& lm, const EncoderStates& enc,
                    const Utterance& utt, const NBestList& nbest, const Scales& scales);

struct SequencePosterior {
  double posterior = 0.0;
  double log_posterior = 0.0;
  /// logsumexp of the scaled scores of every enumerated sequence.
  double log_mass = 0.0;
  std::vector<ScoredSequence> table;  // enumeration order
};

/// Exact posterior of the reference among all EOS-terminated sequences of at
/// most max_len tokens, each scored alpha log P_AM + beta log P_LM. Throws
/// ResourceError if V^max_len exceeds 10^6.
SequencePosterior exact_sequence_posterior(const AcousticModel& am, const LanguageModel& lm, const Utterance& utt,
                                           const Scales& scales, int max_len);

/// Every EOS-terminated sequence over content tokens 1..V-1 with at most
/// max_len tokens, shortest first, lexicographic within a length.
std::vector<TokenSeq> enumerate_sequences(int vocab_size, int max_len);

}  // namespace seqfuse
