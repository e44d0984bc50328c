#include "seqfuse/criteria.hpp"

#include "seqfuse/kernels.hpp"

#include <cmath>
#include <set>

namespace seqfuse {

double Scales::gamma_rel() const {
  if (!(alpha > 0.0)) throw ArgumentError("gamma_rel is undefined for alpha == 0");
  return beta / alpha;
}

Scales Scales::from_gamma(double gamma_abs, double gamma_rel, double gamma_den) {
  Scales s{gamma_abs, gamma_abs * gamma_rel, gamma_den};
  s.validate();
  return s;
}

void Scales::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ArgumentError("alpha must be finite and >= 0");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ArgumentError("beta must be finite and >= 0");
  if (!(gamma_den >= 0.0 && gamma_den <= 1.0)) throw ArgumentError("gamma_den must lie in [0, 1]");
}

LossOutput ce_loss(Var am_logprobs, const TokenSeq& tokens) {
  if (static_cast<Index>(tokens.size()) != am_logprobs.rows())
    throw ArgumentError("ce_loss: " + std::to_string(tokens.size()) + " tokens for " +
                        std::to_string(am_logprobs.rows()) + " rows");
  const Var picked = gather_logprob(am_logprobs, tokens);
  LossOutput out;
  out.loss = scale(sum(picked), -1.0);
  const MatX& pv = picked.value();
  out.per_position.assign(pv.data(), pv.data() + pv.size());
  return out;
}

LossOutput local_fusion_loss(Var am_logprobs, Var lm_logprobs, const TokenSeq& tokens, const Scales& scales) {
  scales.validate();
  if (am_logprobs.rows() != lm_logprobs.rows() || am_logprobs.cols() != lm_logprobs.cols())
    throw DimensionError("local_fusion_loss: AM rows " + std::to_string(am_logprobs.rows()) + "x" +
                         std::to_string(am_logprobs.cols()) + " vs LM rows " + std::to_string(lm_logprobs.rows()) +
                         "x" + std::to_string(lm_logprobs.cols()));
  if (static_cast<Index>(tokens.size()) != am_logprobs.rows())
    throw ArgumentError("local_fusion_loss: token count does not match row count");

  // With alpha = 1 and no LM the combination is the AM distribution itself,
  // whose rows are already normalized: the renormalizer is identically zero.
  if (scales.alpha == 1.0 && scales.beta == 0.0) return ce_loss(am_logprobs, tokens);

  Var combined = scale(am_logprobs, scales.alpha);
  if (scales.beta != 0.0) combined = combined + scale(lm_logprobs, scales.beta);
  const Var numer = gather_logprob(combined, tokens);
  const Var denom = logsumexp(combined, Axis::kCols);
  LossOutput out;
  out.loss = sum(denom) - sum(numer);
  const MatX& nv = numer.value();
  out.per_position.assign(nv.data(), nv.data() + nv.size());
  out.denominator = denom.value().sum();
  return out;
}

namespace {

void check_nbest(const Utterance& utt, const NBestList& nbest, int vocab_size) {
  if (nbest.hypotheses.empty()) throw ContractError("mmi_loss: empty n-best list");
  std::set<TokenSeq> seen;
  bool has_ref = false;
  for (const auto& h : nbest.hypotheses) {
    if (!is_eos_terminated(h.tokens)) throw ContractError("mmi_loss: hypothesis is not EOS-terminated");
    for (TokenId w : h.tokens)
      if (w < 0 || w >= vocab_size) throw ContractError("mmi_loss: hypothesis token outside vocabulary");
    if (!seen.insert(h.tokens).second) throw ContractError("mmi_loss: duplicate hypothesis in n-best list");
    has_ref = has_ref || h.tokens == utt.tokens;
  }
  if (!has_ref) throw ContractError("mmi_loss: reference absent from n-best list (utterance " + utt.id + ")");
}

}  // namespace

LossOutput mmi_loss(Graph& g, const AcousticModel& am, const LanguageModel& lm, const Utterance& utt,
                    const NBestList& nbest, const Scales& scales) {
  const EncoderStates enc = am.encode(g, utt.feats);
  return mmi_loss(g, am, lm, enc, utt, nbest, scales);
}

LossOutput mmi_loss(Graph& g, const AcousticModel& am, const LanguageModel& lm, const EncoderStates& enc,
                    const Utterance& utt, const NBestList& nbest, const Scales& scales) {
  scales.validate();
  check_nbest(utt, nbest, am.vocab_size());

  std::vector<Var> totals;
  totals.reserve(nbest.size());
  Var numerator;
  LossOutput out;
  for (const auto& h : nbest.hypotheses) {
    const Var picked = gather_logprob(am.sequence_logprobs(g, enc, h.tokens), h.tokens);
    Var total = scale(sum(picked), scales.alpha);
    if (scales.beta != 0.0) total = add_scalar(total, scales.beta * lm_sequence_logprob(lm, h.tokens));
    totals.push_back(total);
    if (h.tokens == utt.tokens) {
      numerator = total;
      Graph scratch;
      const MatX lm_rows = gather_logprob(lm_sequence_logprobs(scratch, lm, h.tokens), h.tokens).value();
      const MatX& am_rows = picked.value();
      for (Index n = 0; n < am_rows.rows(); ++n)
        out.per_position.push_back(scales.alpha * am_rows(n, 0) + scales.beta * lm_rows(n, 0));
    }
  }
  const Var denominator = logsumexp(concat_rows(totals), Axis::kRows);
  out.denominator = denominator.scalar();
  out.loss = scale(denominator, scales.gamma_den) - numerator;
  return out;
}

std::vector<TokenSeq> enumerate_sequences(int vocab_size, int max_len) {
  if (vocab_size < 1 || max_len < 1) throw ArgumentError("enumerate_sequences: vocab_size and max_len must be >= 1");
  std::vector<TokenSeq> out;
  std::vector<TokenSeq> prefixes{{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<TokenSeq> next;
    for (const auto& p : prefixes) {
      TokenSeq done = p;
      done.push_back(kEos);
      out.push_back(std::move(done));
      if (len == max_len) continue;
      for (TokenId w = 1; w < vocab_size; ++w) {
        TokenSeq q = p;
        q.push_back(w);
        next.push_back(std::move(q));
      }
    }
    prefixes = std::move(next);
  }
  return out;
}

SequencePosterior exact_sequence_posterior(const AcousticModel& am, const LanguageModel& lm, const Utterance& utt,
                                           const Scales& scales, int max_len) {
  scales.validate();
  const int v = am.vocab_size();
  if (max_len < 1) throw ArgumentError("exact_sequence_posterior: max_len must be >= 1");
  if (std::pow(static_cast<double>(v), max_len) > 1e6)
    throw ResourceError("exact_sequence_posterior: V^max_len = " + std::to_string(v) + "^" + std::to_string(max_len) +
                        " exceeds the enumeration limit of 10^6");
  if (!is_eos_terminated(utt.tokens) || static_cast<int>(utt.tokens.size()) > max_len)
    throw ArgumentError("exact_sequence_posterior: reference must be EOS-terminated and at most max_len tokens");

  Graph enc_graph;
  const EncoderStates enc_vars = am.encode(enc_graph, utt.feats);
  const MatX states = enc_vars.states.value();
  const MatX projected = enc_vars.projected.value();

  SequencePosterior out;
  double ref_score = 0.0;
  bool found = false;
  for (TokenSeq& seq : enumerate_sequences(v, max_len)) {
    Graph g;
    const EncoderStates enc{g.constant(states), g.constant(projected)};
    const double am_score = sum(gather_logprob(am.sequence_logprobs(g, enc, seq), seq)).scalar();
    double score = scales.alpha * am_score;
    if (scales.beta != 0.0) score += scales.beta * lm_sequence_logprob(lm, seq);
    if (seq == utt.tokens) {
      ref_score = score;
      found = true;
    }
    out.table.push_back({std::move(seq), score, false});
  }
  if (!found) throw ArgumentError("exact_sequence_posterior: reference contains tokens outside the vocabulary");

  RowVecX scores(static_cast<Index>(out.table.size()));
  for (std::size_t i = 0; i < out.table.size(); ++i) scores(static_cast<Index>(i)) = out.table[i].score;
  out.log_mass = logsumexp(scores);
  out.log_posterior = ref_score - out.log_mass;
  out.posterior = std::exp(out.log_posterior);
  return out;
}

}  // namespace seqfuse
