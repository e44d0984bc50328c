#pragma once

// Mini-batch SGD over the three training criteria, plus recurrent LM
// training on text-only data.

#include "seqfuse/checkpoint.hpp"
#include "seqfuse/config.hpp"
#include "seqfuse/metrics.hpp"

#include <filesystem>
#include <span>

namespace seqfuse {

/// Best hypothesis per utterance.
std::vector<ScoredSequence> decode_utterances(const AcousticModel& am, const LanguageModel* lm,
                                              const std::vector<Utterance>& utts, const DecodeConfig& cfg);

/// Pooled WER of decoded hypotheses against the references (EOS stripped).
WerReport decode_wer(const AcousticModel& am, const LanguageModel* lm, const std::vector<Utterance>& utts,
                     const DecodeConfig& cfg);

/// Scales every gradient by min(1, max_norm / ||g||) over the whole list;
/// returns the norm before clipping.
double clip_global_norm(std::span<ParameterList* const> groups, double max_norm);

/// One SGD update: value -= lr * grad.
void sgd_update(std::span<ParameterList* const> groups, double lr);

class Trainer {
 public:
  /// `lm` may be null for ce. For local with joint training the LM's own
  /// parameters are updated too; otherwise it is frozen.
  Trainer(const RunConfig& cfg, AcousticModel& am, LanguageModel* lm);

  /// Loss of one utterance recorded into `g`. For mmi the n-best list is
  /// regenerated from the current model.
  LossOutput utterance_loss(Graph& g, const Utterance& u) const;

  /// Forward, backward and one update over `batch`; returns the mean loss.
  double step(std::span<const Utterance* const> batch);

  /// Mean per-utterance loss without gradients.
  double mean_loss(const std::vector<Utterance>& utts) const;

  long steps() const { return steps_; }
  Criterion criterion() const { return criterion_; }

 private:
  Criterion criterion_;
  Scales scales_;
  int nbest_;
  int max_len_;
  double lr_;
  double clip_norm_;
  AcousticModel& am_;
  LanguageModel* lm_;
  std::vector<ParameterList*> groups_;
  long steps_ = 0;
};

struct EpochReport {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double dev_wer = 0.0;
};

struct TrainSummary {
  std::vector<EpochReport> epochs;
  std::vector<double> step_losses;
};

/// Full fixed-epoch run: per-epoch shuffle, steps, dev loss and dev WER with
/// the decode settings of `cfg`. When `out_dir` is non-empty writes
/// metrics.jsonl, steps.csv, timing.csv, epoch_NNN.sqf and final.sqf.
TrainSummary run_training(const RunConfig& cfg, const std::vector<Utterance>& train, const std::vector<Utterance>& dev,
                          AcousticModel& am, LanguageModel* lm, const std::filesystem::path& out_dir = {});

/// Trains a recurrent LM on EOS-terminated sentences with mean per-sentence
/// negative log-likelihood.
void train_recurrent_lm(RecurrentLM& lm, const std::vector<TokenSeq>& text, int epochs, int batch_size, double lr,
                        double clip_norm, std::uint64_t seed);

/// Checkpoint metadata for a model trained under `cfg`.
nlohmann::json checkpoint_metadata(const RunConfig& cfg, long step);

}  // namespace seqfuse
