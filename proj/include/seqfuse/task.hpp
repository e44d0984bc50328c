#pragma once

// Synthetic noisy-channel recognition task: a seeded Markov text source,
// per-token feature prototypes and Gaussian frame noise.

#include "seqfuse/nbest.hpp"
#include "seqfuse/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <map>

namespace seqfuse {

struct TaskConfig {
  int vocab_size = 20;  // content symbols plus EOS
  int markov_order = 1;
  double temperature = 0.5;
  double eos_prob = 0.2;  // per step, never directly after BOS
  int max_sentence_len = 12;  // content tokens; EOS is forced afterwards
  int frames_per_token = 2;
  int feature_dim = 8;
  double noise_std = 1.0;
  int n_train = 2000;
  int n_dev = 200;
  int n_test = 200;
  int n_text_only = 20000;
  std::uint64_t seed = 42;

  void validate() const;
};

/// Seeded Markov chain over content symbols 1..V-1 with EOS termination.
/// Contexts are the last `order` tokens, BOS-padded.
class MarkovSource {
 public:
  explicit MarkovSource(const TaskConfig& cfg);

  /// Next-token distribution (length V, EOS at index 0) for a context of
  /// exactly `order` tokens.
  const RowVecX& transition(const TokenSeq& context) const;
  TokenSeq sample(Rng& rng) const;
  int order() const { return order_; }

 private:
  int order_;
  int vocab_size_;
  int max_len_;
  std::map<TokenSeq, RowVecX> rows_;
};

struct Dataset {
  std::vector<Utterance> train, dev, test;
  std::vector<TokenSeq> text_only;
  std::vector<std::string> vocab;  // index = id; 0 is EOS

  const std::vector<Utterance>& split(std::string_view name) const;
};

/// Feature prototype matrix, one d_f row per token id (row 0 unused).
MatX token_prototypes(const TaskConfig& cfg);

Dataset generate_dataset(const TaskConfig& cfg);

// File formats: JSON-lines utterances {"id", "tokens", "feats"}, one
// space-separated id sequence per text line, one symbol per vocabulary line.
void write_utterances(const std::filesystem::path& path, const std::vector<Utterance>& utts);
std::vector<Utterance> read_utterances(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::vector<TokenSeq>& text);
std::vector<TokenSeq> read_text(const std::filesystem::path& path);
void write_vocab(const std::filesystem::path& path, const std::vector<std::string>& vocab);
std::vector<std::string> read_vocab(const std::filesystem::path& path);

/// Writes train/dev/test .jsonl, text.txt and vocab.txt into `dir`.
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);

}  // namespace seqfuse
