#pragma once

// Beam search over the combined AM/LM score with three scoring modes and
// n-best extraction for sequence training.

#include "seqfuse/acoustic_model.hpp"
#include "seqfuse/kernels.hpp"
#include "seqfuse/language_model.hpp"
#include "seqfuse/nbest.hpp"

#include <string_view>

namespace seqfuse {

enum class DecodeMode { kAmOnly, kShallow, kLocal };

DecodeMode parse_decode_mode(std::string_view s);
std::string_view to_string(DecodeMode m);

struct DecodeConfig {
  DecodeMode mode = DecodeMode::kShallow;
  double alpha = 1.0;
  double beta = 0.0;
  int beam_size = 4;
  int max_len = 20;
  /// Divide final scores by token count (EOS included) for the final ranking
  /// only. Must stay off when the result feeds sequence training.
  bool length_norm = false;

  void validate() const;
};

/// Per-token scores of one expansion step.
///   am_only: am
///   shallow: alpha am + beta lm (unnormalized)
///   local:   alpha am + beta lm - logsumexp(alpha am + beta lm)
template <typename AmRow, typename LmRow>
RowVector<typename AmRow::Scalar> step_scores(DecodeMode mode, const Eigen::MatrixBase<AmRow>& am,
                                              const Eigen::MatrixBase<LmRow>& lm, typename AmRow::Scalar alpha,
                                              typename AmRow::Scalar beta) {
  using Scalar = typename AmRow::Scalar;
  if (mode == DecodeMode::kAmOnly) return am;
  if (am.size() != lm.size()) throw DimensionError("step_scores: AM and LM rows differ in size");
  RowVector<Scalar> s = alpha * am.derived().reshaped().transpose();
  if (beta != Scalar(0)) s += beta * lm.derived().reshaped().transpose();
  if (mode == DecodeMode::kLocal) s.array() -= logsumexp(s);
  return s;
}

/// Beam search. Finished hypotheses retire to a result pool that does not
/// occupy beam slots; each step keeps the beam_size best unfinished
/// continuations. Without length normalization the search stops once the best
/// active score cannot beat the pool's beam_size-th entry (scores only
/// decrease). At max_len only EOS may be emitted; such hypotheses are flagged
/// truncated. `lm` may be null in am_only mode.
NBestList beam_search(const AcousticModel& am, const LanguageModel* lm, const MatX& feats, const DecodeConfig& cfg);

/// Accumulated score of one complete sequence under a scoring mode, i.e. the
/// score beam search assigns when it reaches that sequence.
double score_sequence(const AcousticModel& am, const LanguageModel* lm, const MatX& feats, const TokenSeq& tokens,
                      DecodeMode mode, double alpha, double beta);

/// Shallow-fusion n-best list of size n (vanilla scores, no length
/// normalization). If the reference is not among the results, the lowest
/// ranked entry is replaced by the reference.
NBestList nbest_with_forced_reference(const AcousticModel& am, const LanguageModel& lm, const Utterance& utt, int n,
                                      double alpha, double beta, int max_len);

}  // namespace seqfuse
