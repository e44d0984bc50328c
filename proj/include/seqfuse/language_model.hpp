#pragma once

#include "seqfuse/acoustic_model.hpp"
#include "seqfuse/graph.hpp"
#include "seqfuse/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <unordered_map>

namespace seqfuse {

/// Per-hypothesis LM state: the padded (k-1)-token window for n-gram models,
/// the recurrent hidden vector otherwise.
struct LMState {
  TokenSeq history;
  Var hidden;
};

struct LmStep {
  Var logprobs;  // 1 x V
  LMState state;
};

class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual int vocab_size() const = 0;
  virtual LMState initial_state(Graph& g) const = 0;
  /// Log-distribution over the next token after consuming `prev`.
  virtual LmStep step(Graph& g, const LMState& state, TokenId prev) const = 0;
  /// Trainable parameters; empty for count-based models.
  virtual ParameterList* parameters() { return nullptr; }
  virtual std::unique_ptr<LanguageModel> clone() const = 0;
};

/// Teacher-forced N x V log-probabilities of an EOS-terminated sequence.
Var lm_sequence_logprobs(Graph& g, const LanguageModel& lm, const TokenSeq& tokens);

/// Sum of stepwise log-probabilities, including the EOS factor.
double lm_sequence_logprob(const LanguageModel& lm, const TokenSeq& tokens);

/// Add-kappa smoothed n-gram model:
///   p(w | ctx) = (count(ctx, w) + kappa) / (count(ctx) + kappa V),
/// with contexts shorter than k-1 padded by BOS.
class NGramLM final : public LanguageModel {
 public:
  NGramLM(int order, int vocab_size, double kappa);

  int order() const { return order_; }
  double kappa() const { return kappa_; }
  int vocab_size() const override { return vocab_size_; }

  /// Adds the n-gram events of one EOS-terminated sequence.
  void add_sequence(const TokenSeq& tokens);
  void add_count(const TokenSeq& context, TokenId w, double count);

  double prob(const TokenSeq& context, TokenId w) const;
  /// Log-probabilities for a context of exactly k-1 tokens (BOS = kBos).
  const RowVecX& log_probs(const TokenSeq& context) const;

  LMState initial_state(Graph& g) const override;
  LmStep step(Graph& g, const LMState& state, TokenId prev) const override;
  std::unique_ptr<LanguageModel> clone() const override { return std::make_unique<NGramLM>(*this); }

  void save(const std::filesystem::path& path) const;
  static NGramLM load(const std::filesystem::path& path);

  /// Contexts with at least one observation, in a stable order.
  const std::map<TokenSeq, RowVecX>& counts() const { return counts_; }

 private:
  void check_context(const TokenSeq& context) const;

  int order_;
  int vocab_size_;
  double kappa_;
  std::map<TokenSeq, RowVecX> counts_;
  mutable std::map<TokenSeq, RowVecX> cache_;
  RowVecX uniform_;
};

NGramLM ngram_train(const std::vector<TokenSeq>& corpus, int order, int vocab_size, double kappa);

struct RecurrentLMDims {
  int vocab_size = 20;
  int hidden_dim = 32;
  bool operator==(const RecurrentLMDims&) const = default;
};

/// Single-layer gated recurrent LM: embedding, one recurrent layer, output
/// projection with bias.
class RecurrentLM final : public LanguageModel {
 public:
  RecurrentLM(const RecurrentLMDims& dims, std::uint64_t seed);

  const RecurrentLMDims& dims() const { return dims_; }
  int vocab_size() const override { return dims_.vocab_size; }
  LMState initial_state(Graph& g) const override;
  LmStep step(Graph& g, const LMState& state, TokenId prev) const override;
  ParameterList* parameters() override { return &params_; }
  const ParameterList& params() const { return params_; }
  std::unique_ptr<LanguageModel> clone() const override { return std::make_unique<RecurrentLM>(*this); }

 private:
  RecurrentLMDims dims_;
  ParameterList params_;
};

}  // namespace seqfuse
