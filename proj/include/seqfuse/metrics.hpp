#pragma once

#include "seqfuse/types.hpp"

#include <utility>
#include <vector>

namespace seqfuse {

struct EditCounts {
  int distance = 0;
  int substitutions = 0;
  int insertions = 0;
  int deletions = 0;

  EditCounts& operator+=(const EditCounts& o) {
    distance += o.distance;
    substitutions += o.substitutions;
    insertions += o.insertions;
    deletions += o.deletions;
    return *this;
  }
};

/// Unit-cost edit distance with an S/I/D split of one optimal alignment.
/// Callers strip EOS first.
EditCounts levenshtein(const TokenSeq& ref, const TokenSeq& hyp);

struct WerReport {
  double wer = 0.0;  // percent
  EditCounts errors;
  long ref_tokens = 0;
};

/// Pooled WER: 100 * sum(distance) / sum(|ref|).
WerReport corpus_wer(const std::vector<std::pair<TokenSeq, TokenSeq>>& pairs);

/// Copy of `tokens` without a trailing EOS.
TokenSeq strip_eos(const TokenSeq& tokens);

}  // namespace seqfuse
