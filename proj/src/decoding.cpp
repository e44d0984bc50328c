#include "seqfuse/decoding.hpp"

#include <algorithm>
#include <cmath>

namespace seqfuse {

DecodeMode parse_decode_mode(std::string_view s) {
  if (s == "am_only") return DecodeMode::kAmOnly;
  if (s == "shallow") return DecodeMode::kShallow;
  if (s == "local") return DecodeMode::kLocal;
  throw ArgumentError("unknown decode mode '" + std::string(s) + "' (expected am_only, shallow or local)");
}

std::string_view to_string(DecodeMode m) {
  switch (m) {
    case DecodeMode::kAmOnly:
      return "am_only";
    case DecodeMode::kShallow:
      return "shallow";
    case DecodeMode::kLocal:
      return "local";
  }
  return "?";
}

void DecodeConfig::validate() const {
  if (beam_size < 1) throw ArgumentError("beam_size must be >= 1");
  if (max_len < 1) throw ArgumentError("max_len must be >= 1");
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ArgumentError("decode scales must be >= 0");
}

namespace {

struct Hyp {
  TokenSeq tokens;
  double score = 0.0;
  DecoderState am_state;
  LMState lm_state;
};

struct Candidate {
  std::size_t parent;
  TokenId token;
  double score;
};

// Lexicographic comparison of parent.tokens + token without materializing it.
bool extended_less(const TokenSeq& pa, TokenId ta, const TokenSeq& pb, TokenId tb) {
  const std::size_t n = std::min(pa.size(), pb.size());
  for (std::size_t i = 0; i < n; ++i)
    if (pa[i] != pb[i]) return pa[i] < pb[i];
  if (pa.size() != pb.size()) {
    // Both extended sequences have length size + 1; compare the next element.
    return pa.size() < pb.size() ? ta < pb[n] : pa[n] < tb;
  }
  return ta < tb;
}

double rank_key(const ScoredSequence& s, bool length_norm) {
  return length_norm ? s.score / static_cast<double>(s.tokens.size()) : s.score;
}

void sort_pool(std::vector<ScoredSequence>& pool) { std::sort(pool.begin(), pool.end(), ranks_before); }

}  // namespace

NBestList beam_search(const AcousticModel& am, const LanguageModel* lm, const MatX& feats, const DecodeConfig& cfg) {
  cfg.validate();
  const bool use_lm = cfg.mode != DecodeMode::kAmOnly;
  if (use_lm && lm == nullptr) throw ArgumentError("beam_search: mode " + std::string(to_string(cfg.mode)) + " needs an LM");
  if (use_lm && lm->vocab_size() != am.vocab_size()) throw ArgumentError("beam_search: AM and LM vocabularies differ");
  const int vocab = am.vocab_size();

  Graph g;
  const EncoderStates enc = am.encode(g, feats);
  std::vector<Hyp> active(1);
  active[0].am_state = am.initial_state(g, enc);
  if (use_lm) active[0].lm_state = lm->initial_state(g);

  std::vector<ScoredSequence> pool;
  const RowVecX no_lm = RowVecX::Zero(vocab);

  for (int len = 1; len <= cfg.max_len && !active.empty(); ++len) {
    const bool last = len == cfg.max_len;
    std::vector<Candidate> cands;
    std::vector<AmStep> am_next;
    std::vector<LmStep> lm_next;
    am_next.reserve(active.size());
    lm_next.reserve(active.size());
    for (std::size_t i = 0; i < active.size(); ++i) {
      const Hyp& h = active[i];
      const TokenId prev = h.tokens.empty() ? kBos : h.tokens.back();
      am_next.push_back(am.step(g, h.am_state, prev, enc));
      const RowVecX am_row = am_next.back().logprobs.value();
      RowVecX scores;
      if (use_lm) {
        lm_next.push_back(lm->step(g, h.lm_state, prev));
        scores = step_scores(cfg.mode, am_row, lm_next.back().logprobs.value(), cfg.alpha, cfg.beta);
      } else {
        scores = step_scores(cfg.mode, am_row, no_lm, cfg.alpha, cfg.beta);
      }
      pool.push_back({h.tokens, h.score + scores(kEos), last});
      pool.back().tokens.push_back(kEos);
      if (last) continue;
      for (TokenId w = 1; w < vocab; ++w) cands.push_back({i, w, h.score + scores(w)});
    }

    std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      return extended_less(active[a.parent].tokens, a.token, active[b.parent].tokens, b.token);
    });
    if (cands.size() > static_cast<std::size_t>(cfg.beam_size)) cands.resize(static_cast<std::size_t>(cfg.beam_size));

    std::vector<Hyp> next;
    next.reserve(cands.size());
    for (const Candidate& c : cands) {
      Hyp h;
      h.tokens = active[c.parent].tokens;
      h.tokens.push_back(c.token);
      h.score = c.score;
      h.am_state = am_next[c.parent].state;
      if (use_lm) h.lm_state = lm_next[c.parent].state;
      next.push_back(std::move(h));
    }
    active = std::move(next);

    if (!cfg.length_norm) {
      sort_pool(pool);
      if (pool.size() > static_cast<std::size_t>(cfg.beam_size)) pool.resize(static_cast<std::size_t>(cfg.beam_size));
      if (pool.size() == static_cast<std::size_t>(cfg.beam_size) && !active.empty() &&
          active.front().score <= pool.back().score)
        break;
    }
  }

  std::sort(pool.begin(), pool.end(), [&](const ScoredSequence& a, const ScoredSequence& b) {
    const double ka = rank_key(a, cfg.length_norm);
    const double kb = rank_key(b, cfg.length_norm);
    if (ka != kb) return ka > kb;
    return a.tokens < b.tokens;
  });
  if (pool.size() > static_cast<std::size_t>(cfg.beam_size)) pool.resize(static_cast<std::size_t>(cfg.beam_size));
  if (cfg.length_norm)
    for (auto& s : pool) s.score = rank_key(s, true);

  NBestList out;
  out.hypotheses = std::move(pool);
  return out;
}

double score_sequence(const AcousticModel& am, const LanguageModel* lm, const MatX& feats, const TokenSeq& tokens,
                      DecodeMode mode, double alpha, double beta) {
  if (!is_eos_terminated(tokens)) throw ArgumentError("score_sequence: tokens must be EOS-terminated");
  const bool use_lm = mode != DecodeMode::kAmOnly;
  if (use_lm && lm == nullptr) throw ArgumentError("score_sequence: mode needs an LM");
  Graph g;
  const EncoderStates enc = am.encode(g, feats);
  const MatX am_rows = am.sequence_logprobs(g, enc, tokens).value();
  const MatX lm_rows = use_lm ? lm_sequence_logprobs(g, *lm, tokens).value() : MatX::Zero(am_rows.rows(), am_rows.cols());
  double total = 0.0;
  for (std::size_t n = 0; n < tokens.size(); ++n) {
    const Index r = static_cast<Index>(n);
    total += step_scores(mode, am_rows.row(r), lm_rows.row(r), alpha, beta)(tokens[n]);
  }
  return total;
}

NBestList nbest_with_forced_reference(const AcousticModel& am, const LanguageModel& lm, const Utterance& utt, int n,
                                      double alpha, double beta, int max_len) {
  if (n < 1) throw ArgumentError("nbest_with_forced_reference: n must be >= 1");
  DecodeConfig cfg;
  cfg.mode = DecodeMode::kShallow;
  cfg.alpha = alpha;
  cfg.beta = beta;
  cfg.beam_size = n;
  cfg.max_len = max_len;
  cfg.length_norm = false;
  NBestList out = beam_search(am, &lm, utt.feats, cfg);
  if (!out.contains(utt.tokens)) {
    if (out.hypotheses.size() == static_cast<std::size_t>(n)) out.hypotheses.pop_back();
    const double ref_score = score_sequence(am, &lm, utt.feats, utt.tokens, DecodeMode::kShallow, alpha, beta);
    out.hypotheses.push_back({utt.tokens, ref_score, false});
    sort_pool(out.hypotheses);
  }
  out.contains_reference = true;
  return out;
}

}  // namespace seqfuse
