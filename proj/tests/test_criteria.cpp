#include "seqfuse/criteria.hpp"
#include "seqfuse/decoding.hpp"
#include "seqfuse/gradcheck.hpp"
#include "seqfuse/kernels.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace seqfuse;
using testing::random_matrix;
using testing::tiny_dims;

namespace {

MatX log_rows(std::initializer_list<std::initializer_list<double>> probs) {
  MatX m(static_cast<Index>(probs.size()), static_cast<Index>(probs.begin()->size()));
  Index r = 0;
  for (const auto& row : probs) {
    Index c = 0;
    for (double p : row) m(r, c++) = std::log(p);
    ++r;
  }
  return m;
}

MatX random_logprob_rows(Rng& rng, Index n, Index v) { return log_softmax_rows(random_matrix(rng, n, v, 2.0)); }

NBestList full_list(int vocab, int max_len) {
  NBestList out;
  for (auto& s : enumerate_sequences(vocab, max_len)) out.hypotheses.push_back({s, 0.0, false});
  return out;
}

// Independent enumerator: depth-first over prefixes with stepwise model
// calls, collecting the scaled score of every EOS-terminated sequence.
void enumerate_naive(const AcousticModel& am, const LanguageModel& lm, Graph& g, const EncoderStates& enc,
                     const DecoderState& am_state, const LMState& lm_state, TokenId prev, double acc, int depth,
                     int max_len, const Scales& s, std::vector<double>& scores) {
  const AmStep a = am.step(g, am_state, prev, enc);
  const LmStep l = lm.step(g, lm_state, prev);
  for (TokenId w = 0; w < am.vocab_size(); ++w) {
    const double next = acc + s.alpha * a.logprobs.value()(0, w) + s.beta * l.logprobs.value()(0, w);
    if (w == kEos)
      scores.push_back(next);
    else if (depth + 1 < max_len)
      enumerate_naive(am, lm, g, enc, a.state, l.state, w, next, depth + 1, max_len, s, scores);
  }
}

double naive_log_mass(const AcousticModel& am, const LanguageModel& lm, const MatX& feats, const Scales& s,
                      int max_len) {
  Graph g;
  const EncoderStates enc = am.encode(g, feats);
  std::vector<double> scores;
  enumerate_naive(am, lm, g, enc, am.initial_state(g, enc), lm.initial_state(g), kBos, 0.0, 0, max_len, s, scores);
  double m = -INFINITY;
  for (double x : scores) m = std::max(m, x);
  long double acc = 0.0L;
  for (double x : scores) acc += std::exp(static_cast<long double>(x - m));
  return m + static_cast<double>(std::log(acc));
}

double am_ce(const AcousticModel& am, const Utterance& u) {
  Graph g;
  return ce_loss(am.sequence_logprobs(g, am.encode(g, u.feats), u.tokens), u.tokens).value();
}

}  // namespace

TEST_CASE("scales") {
  const Scales s = Scales::from_gamma(2.0, 0.35);
  CHECK(s.alpha == 2.0);
  CHECK(s.beta == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(s.gamma_abs() == 2.0);
  CHECK(s.gamma_rel() == doctest::Approx(0.35).epsilon(1e-15));
  CHECK_THROWS_AS((Scales{0.0, 1.0, 1.0}.gamma_rel()), ArgumentError);
  CHECK_THROWS_AS((Scales{-1.0, 0.0, 1.0}.validate()), ArgumentError);
  CHECK_THROWS_AS((Scales{1.0, 0.0, 1.5}.validate()), ArgumentError);
}

TEST_CASE("ce_loss examples") {
  Graph g;
  MatX onehot(2, 2);
  onehot << 0.0, -1000.0, -1000.0, 0.0;
  CHECK(ce_loss(g.constant(onehot), {0, 1}).value() == 0.0);
  CHECK(std::abs(ce_loss(g.constant(MatX::Constant(3, 4, -std::log(4.0))), {1, 3, 0}).value() - 3 * std::log(4.0)) <
        1e-15);
  const LossOutput out = ce_loss(g.constant(log_rows({{0.8, 0.2}, {0.5, 0.5}})), {0, 1});
  CHECK(std::abs(out.value() + std::log(0.8) + std::log(0.5)) < 1e-15);
  CHECK(out.per_position.size() == 2);
  CHECK_THROWS_AS(ce_loss(g.constant(MatX::Zero(2, 2)), {0}), ArgumentError);
}

TEST_CASE("local fusion examples") {
  Graph g;
  const Var am = g.constant(log_rows({{0.8, 0.2}}));
  const Var lm = g.constant(log_rows({{0.9, 0.1}}));
  const LossOutput out = local_fusion_loss(am, lm, {0}, {1.0, 1.0, 1.0});
  CHECK(std::abs(out.value() + std::log(0.72 / 0.74)) < 1e-15);
  CHECK(std::abs(out.denominator - std::log(0.74)) < 1e-15);
  CHECK_THROWS_AS(local_fusion_loss(am, g.constant(MatX::Zero(1, 3)), {0}, {}), std::invalid_argument);
  CHECK_THROWS_AS(local_fusion_loss(am, lm, {0, 0}, {}), std::invalid_argument);
}

TEST_CASE("local fusion reductions and renormalization") {
  Rng rng(5);
  std::uniform_real_distribution<double> sc(0.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 1 + trial % 5, v = 2 + trial % 6;
    const MatX am = random_logprob_rows(rng, n, v), lm = random_logprob_rows(rng, n, v);
    TokenSeq tokens;
    for (Index i = 0; i < n; ++i) tokens.push_back(static_cast<TokenId>((i * 7 + trial) % v));
    Graph g;
    const double ce = ce_loss(g.constant(am), tokens).value();
    CHECK(std::abs(local_fusion_loss(g.constant(am), g.constant(lm), tokens, {1.0, 0.0, 1.0}).value() - ce) < 1e-12);
    const MatX uniform = MatX::Constant(n, v, -std::log(static_cast<double>(v)));
    for (double b : {0.35, 1.0, 2.0})
      CHECK(std::abs(local_fusion_loss(g.constant(am), g.constant(uniform), tokens, {1.0, b, 1.0}).value() - ce) <
            1e-10);

    const double a = sc(rng), b = sc(rng);
    const MatX combined = a * am + b * lm;
    const MatX renorm = combined.colwise() - logsumexp_rows(combined).col(0);
    for (Index r = 0; r < n; ++r) CHECK(std::abs(renorm.row(r).array().exp().sum() - 1.0) < 1e-12);
    CHECK(local_fusion_loss(g.constant(am), g.constant(lm), tokens, {a, b, 1.0}).value() >= 0.0);
  }
}

TEST_CASE("enumerate_sequences") {
  CHECK(enumerate_sequences(1, 4) == std::vector<TokenSeq>{{0}});
  const auto seqs = enumerate_sequences(3, 3);
  CHECK(seqs.size() == 1 + 2 + 4);
  CHECK(seqs[0] == TokenSeq{0});
  CHECK(seqs[1] == TokenSeq{1, 0});
  CHECK(seqs.back() == TokenSeq{2, 2, 0});
}

TEST_CASE("mmi loss examples and contracts") {
  Rng rng(9);
  const AcousticModel am(tiny_dims(3), 4);
  const NGramLM lm = testing::random_bigram(rng, 3);
  Utterance u = testing::random_utterance(rng, 3, 3, 3, 4);
  u.tokens = {2, 1, 0};

  SUBCASE("gamma_den = 0 is weighted cross entropy") {
    Graph g;
    const Scales s{0.7, 0.35, 0.0};
    NBestList nb = full_list(3, 3);
    nb.hypotheses.push_back({u.tokens, 0.0, false});
    nb.hypotheses.erase(nb.hypotheses.begin() + 5);  // keep distinct, keep the reference
    if (!nb.contains(u.tokens)) nb.hypotheses.push_back({u.tokens, 0.0, false});
    std::vector<ScoredSequence> unique;
    for (const auto& h : nb.hypotheses) {
      bool dup = false;
      for (const auto& x : unique) dup = dup || x.tokens == h.tokens;
      if (!dup) unique.push_back(h);
    }
    nb.hypotheses = unique;
    const double expect = s.alpha * am_ce(am, u) - s.beta * lm_sequence_logprob(lm, u.tokens);
    CHECK(std::abs(mmi_loss(g, am, lm, u, nb, s).value() - expect) < 1e-12);
  }
  SUBCASE("reference-only list gives zero") {
    Graph g;
    NBestList nb;
    nb.hypotheses.push_back({u.tokens, 0.0, false});
    CHECK(mmi_loss(g, am, lm, u, nb, {1.0, 0.5, 1.0}).value() == 0.0);
  }
  SUBCASE("contract violations") {
    Graph g;
    NBestList nb;
    CHECK_THROWS_AS(mmi_loss(g, am, lm, u, nb, {}), ContractError);
    nb.hypotheses.push_back({{1, 0}, 0.0, false});
    CHECK_THROWS_AS(mmi_loss(g, am, lm, u, nb, {}), ContractError);
    nb.hypotheses.push_back({u.tokens, 0.0, false});
    nb.hypotheses.push_back({{1, 0}, 0.0, false});
    CHECK_THROWS_AS(mmi_loss(g, am, lm, u, nb, {}), ContractError);
    nb.hypotheses.pop_back();
    nb.hypotheses.push_back({{1, 2}, 0.0, false});
    CHECK_THROWS_AS(mmi_loss(g, am, lm, u, nb, {}), ContractError);
  }
}

TEST_CASE("mmi over the full enumeration equals the exact posterior") {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const int vocab = 2 + trial % 2, max_len = 2 + trial % 3;
    AcousticModel am(tiny_dims(vocab), 100 + trial);
    testing::scale_params(am.parameters(), 3.0);
    const NGramLM lm = testing::random_bigram(rng, vocab);
    const Utterance u = testing::random_utterance(rng, vocab, 3, max_len - 1, 2 + trial % 3);
    const Scales s{0.5 + 0.25 * trial, 0.35, 1.0};
    const SequencePosterior post = exact_sequence_posterior(am, lm, u, s, max_len);
    Graph g;
    const double mmi = mmi_loss(g, am, lm, u, full_list(vocab, max_len), s).value();
    CHECK(std::abs(mmi + std::log(post.posterior)) < 1e-10);
    CHECK(std::abs(mmi + post.log_posterior) < 1e-10);
  }
}

TEST_CASE("mmi denominator is monotone in the list and interpolates in gamma_den") {
  Rng rng(11);
  const AcousticModel am(tiny_dims(3), 12);
  const NGramLM lm = testing::random_bigram(rng, 3);
  Utterance u = testing::random_utterance(rng, 3, 3, 2, 3);
  const NBestList all = full_list(3, 3);
  NBestList growing;
  growing.hypotheses.push_back({u.tokens, 0.0, false});
  double last_den = -INFINITY, last_loss = -INFINITY;
  for (const auto& h : all.hypotheses) {
    if (h.tokens != u.tokens) growing.hypotheses.push_back(h);
    Graph g;
    const LossOutput out = mmi_loss(g, am, lm, u, growing, {1.0, 0.35, 1.0});
    CHECK(out.denominator >= last_den);
    CHECK(out.value() >= last_loss);
    last_den = out.denominator;
    last_loss = out.value();
  }

  for (double gd : {0.1, 0.5, 0.9}) {
    Graph g;
    const double full = mmi_loss(g, am, lm, u, all, {1.0, 0.35, 1.0}).value();
    const double num_only = mmi_loss(g, am, lm, u, all, {1.0, 0.35, 0.0}).value();
    const double mixed = mmi_loss(g, am, lm, u, all, {1.0, 0.35, gd}).value();
    CHECK(std::abs(mixed - ((1.0 - gd) * num_only + gd * full)) < 1e-12);
  }
}

TEST_CASE("exact posterior examples") {
  Rng rng(13);
  SUBCASE("no LM: posterior is exp(-ce) over the enumerated mass") {
    const AcousticModel am(tiny_dims(2), 14);
    const NGramLM lm = testing::random_bigram(rng, 2);
    Utterance u = testing::random_utterance(rng, 2, 3, 2, 3);
    const SequencePosterior p = exact_sequence_posterior(am, lm, u, {1.0, 0.0, 1.0}, 4);
    CHECK(std::abs(p.posterior - std::exp(-am_ce(am, u) - p.log_mass)) < 1e-12);
    CHECK(p.log_mass <= 1e-12);  // truncation can only lose mass
    CHECK(p.table.size() == 4);
  }
  SUBCASE("EOS-only vocabulary") {
    const AcousticModel am(tiny_dims(1), 15);
    const NGramLM lm(1, 1, 1.0);
    Utterance u{"x", {0}, random_matrix(rng, 2, 3)};
    CHECK(std::abs(exact_sequence_posterior(am, lm, u, {1.0, 0.35, 1.0}, 3).posterior - 1.0) < 1e-15);
  }
  SUBCASE("matches a naive recursive enumerator") {
    for (int trial = 0; trial < 10; ++trial) {
      AcousticModel am(tiny_dims(2), 200 + trial);
      testing::scale_params(am.parameters(), 2.0);
      const NGramLM lm = testing::random_bigram(rng, 2);
      const Utterance u = testing::random_utterance(rng, 2, 3, 2, 3);
      const Scales s{1.3, 0.6, 1.0};
      const SequencePosterior p = exact_sequence_posterior(am, lm, u, s, 3);
      CHECK(std::abs(p.log_mass - naive_log_mass(am, lm, u.feats, s, 3)) < 1e-12);
      double total = 0.0;
      for (const auto& row : p.table) total += std::exp(row.score - p.log_mass);
      CHECK(std::abs(total - 1.0) < 1e-10);
    }
  }
  SUBCASE("enumeration guard") {
    const AcousticModel am(tiny_dims(20), 16);
    const NGramLM lm(1, 20, 1.0);
    Utterance u{"x", {1, 0}, random_matrix(rng, 2, 3)};
    CHECK_THROWS_AS(exact_sequence_posterior(am, lm, u, {}, 5), ResourceError);
  }
}

// Weights are spread (x3) so that no gradient coordinate sits near the
// round-off floor of a central difference at eps = 1e-5.
TEST_CASE("criterion gradients pass the finite-difference check") {
  Rng rng(0);
  AcousticModel am(tiny_dims(3), 100);
  testing::scale_params(am.parameters(), 3.0);
  const auto params = testing::tensor_ptrs(am.parameters());
  const Utterance u = testing::random_utterance(rng, 3, 3, 3, 5);
  const NGramLM ngram = testing::random_bigram(rng, 3);

  SUBCASE("ce") {
    const auto rep = finite_diff_check(
        [&](Graph& g) { return ce_loss(am.sequence_logprobs(g, am.encode(g, u.feats), u.tokens), u.tokens).loss; },
        params, 1e-5, 1e-5);
    CHECK_MESSAGE(rep.pass, "max_rel_err " << rep.max_rel_err);
  }
  SUBCASE("local fusion") {
    const auto rep = finite_diff_check(
        [&](Graph& g) {
          const Var a = am.sequence_logprobs(g, am.encode(g, u.feats), u.tokens);
          return local_fusion_loss(a, lm_sequence_logprobs(g, ngram, u.tokens), u.tokens, {2.0, 0.7, 1.0}).loss;
        },
        params, 1e-5, 1e-5);
    CHECK_MESSAGE(rep.pass, "max_rel_err " << rep.max_rel_err);
  }
  SUBCASE("local fusion, joint AM + LM") {
    RecurrentLM rlm({3, 3}, 200);
    testing::scale_params(*rlm.parameters(), 3.0);
    auto all = params;
    for (const auto& p : rlm.params()) all.push_back(&p.tensor);
    const auto rep = finite_diff_check(
        [&](Graph& g) {
          const Var a = am.sequence_logprobs(g, am.encode(g, u.feats), u.tokens);
          return local_fusion_loss(a, lm_sequence_logprobs(g, rlm, u.tokens), u.tokens, {2.0, 0.7, 1.0}).loss;
        },
        all, 1e-5, 1e-5);
    CHECK_MESSAGE(rep.pass, "max_rel_err " << rep.max_rel_err);
  }
  SUBCASE("mmi, n = 4") {
    const NBestList nb = nbest_with_forced_reference(am, ngram, u, 4, 1.0, 0.35, 6);
    REQUIRE(nb.size() == 4);
    const auto rep = finite_diff_check(
        [&](Graph& g) { return mmi_loss(g, am, ngram, u, nb, {1.0, 0.35, 1.0}).loss; }, params, 1e-5, 1e-5);
    CHECK_MESSAGE(rep.pass, "max_rel_err " << rep.max_rel_err);
  }
}
