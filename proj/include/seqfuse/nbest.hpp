#pragma once

#include "seqfuse/types.hpp"

#include <string>
#include <vector>

namespace seqfuse {

/// One training or test example: reference tokens (EOS-terminated) and T x d_f
/// feature frames.
struct Utterance {
  std::string id;
  TokenSeq tokens;
  MatX feats;
};

struct ScoredSequence {
  TokenSeq tokens;
  double score = 0.0;
  /// EOS was forced because the hypothesis reached max_len.
  bool truncated = false;
};

/// Descending score; equal scores fall back to lexicographic token order.
inline bool ranks_before(const ScoredSequence& a, const ScoredSequence& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

struct NBestList {
  std::vector<ScoredSequence> hypotheses;
  bool contains_reference = false;

  std::size_t size() const { return hypotheses.size(); }
  const ScoredSequence& best() const { return hypotheses.front(); }
  bool contains(const TokenSeq& tokens) const {
    for (const auto& h : hypotheses)
      if (h.tokens == tokens) return true;
    return false;
  }
};

}  // namespace seqfuse
