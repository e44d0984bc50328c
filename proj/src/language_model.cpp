#include "seqfuse/language_model.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace seqfuse {

namespace {

void check_prev(TokenId prev, int vocab_size, const char* who) {
  if (prev == kEos) throw ArgumentError(std::string(who) + ": cannot condition on EOS, sequences are terminal");
  if (prev != kBos && (prev < 0 || prev >= vocab_size))
    throw ArgumentError(std::string(who) + ": token id " + std::to_string(prev) + " outside vocabulary of size " +
                        std::to_string(vocab_size));
}

}  // namespace

Var lm_sequence_logprobs(Graph& g, const LanguageModel& lm, const TokenSeq& tokens) {
  if (!is_eos_terminated(tokens)) throw ArgumentError("lm_sequence_logprobs: tokens must end with (only one) EOS");
  std::vector<Var> rows;
  rows.reserve(tokens.size());
  LMState state = lm.initial_state(g);
  TokenId prev = kBos;
  for (TokenId w : tokens) {
    LmStep s = lm.step(g, state, prev);
    rows.push_back(s.logprobs);
    state = std::move(s.state);
    prev = w;
  }
  return concat_rows(rows);
}

double lm_sequence_logprob(const LanguageModel& lm, const TokenSeq& tokens) {
  Graph g;
  const Var rows = lm_sequence_logprobs(g, lm, tokens);
  for (TokenId w : tokens)
    if (w < 0 || w >= lm.vocab_size()) throw ArgumentError("lm_sequence_logprob: token outside vocabulary");
  return sum(gather_logprob(rows, tokens)).scalar();
}

// ---------------------------------------------------------------------------
// NGramLM

NGramLM::NGramLM(int order, int vocab_size, double kappa)
    : order_(order), vocab_size_(vocab_size), kappa_(kappa) {
  if (order < 1) throw ArgumentError("NGramLM: order must be >= 1");
  if (vocab_size < 1) throw ArgumentError("NGramLM: vocabulary must be nonempty");
  if (!(kappa > 0.0)) throw ArgumentError("NGramLM: smoothing constant must be positive");
  uniform_ = RowVecX::Constant(vocab_size, -std::log(static_cast<double>(vocab_size)));
}

void NGramLM::check_context(const TokenSeq& context) const {
  if (static_cast<int>(context.size()) != order_ - 1)
    throw ArgumentError("NGramLM: context of length " + std::to_string(context.size()) + " for order " +
                        std::to_string(order_));
  for (TokenId c : context)
    if (c != kBos && (c <= kEos || c >= vocab_size_))
      throw ArgumentError("NGramLM: invalid context token " + std::to_string(c));
}

void NGramLM::add_count(const TokenSeq& context, TokenId w, double count) {
  check_context(context);
  if (w < 0 || w >= vocab_size_) throw ArgumentError("NGramLM: token id " + std::to_string(w) + " outside vocabulary");
  auto [it, inserted] = counts_.try_emplace(context, RowVecX::Zero(vocab_size_));
  it->second(w) += count;
  cache_.erase(context);
}

void NGramLM::add_sequence(const TokenSeq& tokens) {
  if (!is_eos_terminated(tokens)) throw ArgumentError("ngram_train: every sequence must be EOS-terminated");
  TokenSeq ctx(static_cast<std::size_t>(order_ - 1), kBos);
  for (TokenId w : tokens) {
    add_count(ctx, w, 1.0);
    if (!ctx.empty()) {
      ctx.erase(ctx.begin());
      ctx.push_back(w);
    }
  }
}

const RowVecX& NGramLM::log_probs(const TokenSeq& context) const {
  if (auto it = cache_.find(context); it != cache_.end()) return it->second;
  check_context(context);
  auto c = counts_.find(context);
  if (c == counts_.end()) return uniform_;
  const double denom = c->second.sum() + kappa_ * vocab_size_;
  RowVecX lp = ((c->second.array() + kappa_) / denom).log();
  return cache_.emplace(context, std::move(lp)).first->second;
}

double NGramLM::prob(const TokenSeq& context, TokenId w) const {
  if (w < 0 || w >= vocab_size_) throw ArgumentError("NGramLM: token id " + std::to_string(w) + " outside vocabulary");
  return std::exp(log_probs(context)(w));
}

LMState NGramLM::initial_state(Graph&) const {
  return {TokenSeq(static_cast<std::size_t>(order_ - 1), kBos), Var{}};
}

LmStep NGramLM::step(Graph& g, const LMState& state, TokenId prev) const {
  check_prev(prev, vocab_size_, "lm_step");
  LMState next = state;
  if (prev != kBos && !next.history.empty()) {
    next.history.erase(next.history.begin());
    next.history.push_back(prev);
  }
  return {g.constant(log_probs(next.history)), std::move(next)};
}

void NGramLM::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write n-gram model to " + path.string());
  out << "seqfuse-ngram 1\n"
      << "order " << order_ << '\n'
      << "vocab " << vocab_size_ << '\n'
      << "kappa " << std::setprecision(17) << kappa_ << '\n';
  for (const auto& [ctx, row] : counts_) {
    for (TokenId w = 0; w < vocab_size_; ++w) {
      if (row(w) == 0.0) continue;
      for (TokenId c : ctx) out << (c == kBos ? std::string("<s>") : std::to_string(c)) << ' ';
      out << w << ' ' << row(w) << '\n';
    }
  }
  if (!out) throw DataError("failed writing n-gram model to " + path.string());
}

NGramLM NGramLM::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open n-gram model " + path.string());
  std::string magic, key;
  int version = 0, order = 0, vocab = 0;
  double kappa = 0.0;
  in >> magic >> version;
  if (magic != "seqfuse-ngram" || version != 1) throw DataError(path.string() + " is not a seqfuse n-gram file");
  in >> key >> order;
  if (key != "order") throw DataError(path.string() + ": expected 'order'");
  in >> key >> vocab;
  if (key != "vocab") throw DataError(path.string() + ": expected 'vocab'");
  in >> key >> kappa;
  if (key != "kappa") throw DataError(path.string() + ": expected 'kappa'");
  NGramLM lm(order, vocab, kappa);
  std::string line;
  std::getline(in, line);
  std::size_t lineno = 4;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    TokenSeq ctx;
    std::string field;
    for (int i = 0; i < order - 1; ++i) {
      if (!(ls >> field)) throw DataError(path.string() + ":" + std::to_string(lineno) + ": short line");
      ctx.push_back(field == "<s>" ? kBos : std::stoi(field));
    }
    TokenId w = 0;
    double count = 0.0;
    if (!(ls >> w >> count)) throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed line");
    lm.add_count(ctx, w, count);
  }
  return lm;
}

NGramLM ngram_train(const std::vector<TokenSeq>& corpus, int order, int vocab_size, double kappa) {
  if (corpus.empty()) throw ArgumentError("ngram_train: empty corpus");
  NGramLM lm(order, vocab_size, kappa);
  for (const auto& s : corpus) lm.add_sequence(s);
  return lm;
}

// ---------------------------------------------------------------------------
// RecurrentLM

RecurrentLM::RecurrentLM(const RecurrentLMDims& dims, std::uint64_t seed) : dims_(dims) {
  if (dims.vocab_size < 1 || dims.hidden_dim < 1) throw ArgumentError("RecurrentLM: dimensions must be positive");
  const Index v = dims.vocab_size;
  const Index d = dims.hidden_dim;
  auto add = [&](std::string name, Index rows, Index cols, Index fan_in) {
    Tensor t = init_uniform(rows, cols, fan_in, seed, "lm." + name);
    params_.push_back({"lm." + std::move(name), std::move(t)});
  };
  add("embedding", v + 1, d, v + 1);
  add("w_input", d, 3 * d, 2 * d);
  add("w_gates", d, 2 * d, 2 * d);
  add("w_cand", d, d, 2 * d);
  add("out.w", d, v, d);
  add("out.b", 1, v, d);
}

LMState RecurrentLM::initial_state(Graph& g) const { return {{}, g.constant(MatX::Zero(1, dims_.hidden_dim))}; }

LmStep RecurrentLM::step(Graph& g, const LMState& state, TokenId prev) const {
  check_prev(prev, dims_.vocab_size, "lm_step");
  const Index row = prev == kBos ? dims_.vocab_size : prev;
  const Var emb = slice_rows(g.param(params_[0].tensor), row, 1);
  const Var proj = matmul(emb, g.param(params_[1].tensor));
  LMState next;
  next.hidden = gru_cell(proj, 0, state.hidden, g.param(params_[2].tensor), g.param(params_[3].tensor));
  const Var logits = add(matmul(next.hidden, g.param(params_[4].tensor)), g.param(params_[5].tensor));
  return {log_softmax(logits), std::move(next)};
}

}  // namespace seqfuse
