#pragma once

// Small builders shared by the test binaries.

#include "seqfuse/acoustic_model.hpp"
#include "seqfuse/language_model.hpp"
#include "seqfuse/nbest.hpp"
#include "seqfuse/rng.hpp"

#include <filesystem>
#include <random>

namespace testing {

using namespace seqfuse;

inline AcousticModelDims tiny_dims(int vocab, int feature_dim = 3) {
  AcousticModelDims d;
  d.vocab_size = vocab;
  d.feature_dim = feature_dim;
  d.embed_dim = 3;
  d.hidden_dim = 3;
  d.attention_dim = 3;
  d.encoder_layers = 1;
  return d;
}

inline MatX random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  MatX m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m(i) = normal(rng);
  return m;
}

/// Reference of 1..max_content content tokens (EOS-terminated) with
/// `frames` feature rows.
inline Utterance random_utterance(Rng& rng, int vocab, int feature_dim, int max_content, Index frames) {
  std::uniform_int_distribution<int> len(vocab > 1 ? 1 : 0, vocab > 1 ? max_content : 0);
  std::uniform_int_distribution<int> tok(1, std::max(1, vocab - 1));
  Utterance u;
  u.id = "utt";
  const int n = len(rng);
  for (int i = 0; i < n; ++i) u.tokens.push_back(tok(rng));
  u.tokens.push_back(kEos);
  u.feats = random_matrix(rng, frames, feature_dim);
  return u;
}

/// Bigram LM with random counts over every context.
inline NGramLM random_bigram(Rng& rng, int vocab, double kappa = 0.5) {
  NGramLM lm(2, vocab, kappa);
  std::uniform_int_distribution<int> count(0, 5);
  for (TokenId ctx = kBos; ctx < vocab; ++ctx) {
    if (ctx == kEos) continue;
    for (TokenId w = 0; w < vocab; ++w) lm.add_count({ctx}, w, count(rng));
  }
  return lm;
}

/// Scales every parameter of `params` by `factor` (spreads random models).
inline void scale_params(ParameterList& params, double factor) {
  for (auto& p : params) p.tensor.value() *= factor;
}

inline std::vector<const Tensor*> tensor_ptrs(const ParameterList& params) {
  std::vector<const Tensor*> out;
  for (const auto& p : params) out.push_back(&p.tensor);
  return out;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("seqfuse_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
