#include "seqfuse/metrics.hpp"

namespace seqfuse {

TokenSeq strip_eos(const TokenSeq& tokens) {
  TokenSeq out = tokens;
  if (!out.empty() && out.back() == kEos) out.pop_back();
  return out;
}

EditCounts levenshtein(const TokenSeq& ref, const TokenSeq& hyp) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  // cost[i][j] for ref[0,i) vs hyp[0,j), row-major in one buffer.
  std::vector<int> cost((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> int& { return cost[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1), at(i - 1, j) + 1, at(i, j - 1) + 1});

  EditCounts out;
  out.distance = at(n, m);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++out.substitutions;
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++out.deletions;
      --i;
    } else {
      ++out.insertions;
      --j;
    }
  }
  return out;
}

WerReport corpus_wer(const std::vector<std::pair<TokenSeq, TokenSeq>>& pairs) {
  if (pairs.empty()) throw ArgumentError("corpus_wer: no sentence pairs");
  WerReport r;
  for (const auto& [ref, hyp] : pairs) {
    r.errors += levenshtein(ref, hyp);
    r.ref_tokens += static_cast<long>(ref.size());
  }
  if (r.ref_tokens == 0) throw ArgumentError("corpus_wer: total reference length is zero");
  r.wer = 100.0 * r.errors.distance / static_cast<double>(r.ref_tokens);
  return r;
}

}  // namespace seqfuse
