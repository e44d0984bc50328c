#include "seqfuse/trainer.hpp"

#include "seqfuse/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace seqfuse {

std::vector<ScoredSequence> decode_utterances(const AcousticModel& am, const LanguageModel* lm,
                                              const std::vector<Utterance>& utts, const DecodeConfig& cfg) {
  std::vector<ScoredSequence> out;
  out.reserve(utts.size());
  for (const auto& u : utts) out.push_back(beam_search(am, lm, u.feats, cfg).best());
  return out;
}

WerReport decode_wer(const AcousticModel& am, const LanguageModel* lm, const std::vector<Utterance>& utts,
                     const DecodeConfig& cfg) {
  const auto hyps = decode_utterances(am, lm, utts, cfg);
  std::vector<std::pair<TokenSeq, TokenSeq>> pairs;
  pairs.reserve(utts.size());
  for (std::size_t i = 0; i < utts.size(); ++i) pairs.emplace_back(strip_eos(utts[i].tokens), strip_eos(hyps[i].tokens));
  return corpus_wer(pairs);
}

double clip_global_norm(std::span<ParameterList* const> groups, double max_norm) {
  double sq = 0.0;
  for (const ParameterList* ps : groups)
    for (const auto& p : *ps)
      if (p.tensor.grad().size()) sq += p.tensor.grad().squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (const ParameterList* ps : groups)
      for (const auto& p : *ps) p.tensor.grad() *= f;
  }
  return norm;
}

void sgd_update(std::span<ParameterList* const> groups, double lr) {
  for (ParameterList* ps : groups)
    for (auto& p : *ps)
      if (p.tensor.requires_grad() && p.tensor.grad().size()) p.tensor.value() -= lr * p.tensor.grad();
}

Trainer::Trainer(const RunConfig& cfg, AcousticModel& am, LanguageModel* lm)
    : criterion_(cfg.criterion()),
      scales_(cfg.scales()),
      nbest_(cfg.get_int("nbest")),
      max_len_(cfg.get_int("max_len")),
      lr_(cfg.learning_rate()),
      clip_norm_(cfg.get_double("clip_norm")),
      am_(am),
      lm_(lm) {
  if (criterion_ == Criterion::kLm) throw ConfigError("Trainer handles acoustic criteria; use train_recurrent_lm");
  if (criterion_ != Criterion::kCe && lm_ == nullptr) throw ConfigError("criterion " + std::string(to_string(criterion_)) + " needs an LM");
  groups_.push_back(&am_.parameters());
  if (lm_ && lm_->parameters()) {
    const bool joint = cfg.get_bool("joint_lm") && criterion_ == Criterion::kLocal;
    set_requires_grad(*lm_->parameters(), joint);
    if (joint) groups_.push_back(lm_->parameters());
  }
}

LossOutput Trainer::utterance_loss(Graph& g, const Utterance& u) const {
  switch (criterion_) {
    case Criterion::kCe: {
      const EncoderStates enc = am_.encode(g, u.feats);
      return ce_loss(am_.sequence_logprobs(g, enc, u.tokens), u.tokens);
    }
    case Criterion::kLocal: {
      const EncoderStates enc = am_.encode(g, u.feats);
      const Var am_rows = am_.sequence_logprobs(g, enc, u.tokens);
      return local_fusion_loss(am_rows, lm_sequence_logprobs(g, *lm_, u.tokens), u.tokens, scales_);
    }
    case Criterion::kMmi: {
      const NBestList nbest =
          nbest_with_forced_reference(am_, *lm_, u, nbest_, scales_.alpha, scales_.beta, max_len_);
      return mmi_loss(g, am_, *lm_, u, nbest, scales_);
    }
    case Criterion::kLm:
      break;
  }
  throw ContractError("utterance_loss: unsupported criterion");
}

double Trainer::step(std::span<const Utterance* const> batch) {
  if (batch.empty()) throw ArgumentError("Trainer::step: empty batch");
  for (const ParameterList* ps : groups_) zero_grads(*ps);
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const Utterance* u : batch) {
    Graph g;
    const LossOutput out = utterance_loss(g, *u);
    total += out.value();
    g.backward(scale(out.loss, inv));
  }
  clip_global_norm(groups_, clip_norm_);
  sgd_update(groups_, lr_);
  ++steps_;
  return total * inv;
}

double Trainer::mean_loss(const std::vector<Utterance>& utts) const {
  if (utts.empty()) return 0.0;
  double total = 0.0;
  for (const auto& u : utts) {
    Graph g;
    total += utterance_loss(g, u).value();
  }
  return total / static_cast<double>(utts.size());
}

nlohmann::json checkpoint_metadata(const RunConfig& cfg, long step) {
  const AcousticModelDims d = cfg.am_dims();
  return {{"criterion", std::string(to_string(cfg.criterion()))},
          {"step", step},
          {"seed", cfg.get_int("seed")},
          {"dims",
           {{"vocab_size", d.vocab_size},
            {"feature_dim", d.feature_dim},
            {"embed_dim", d.embed_dim},
            {"hidden_dim", d.hidden_dim},
            {"attention_dim", d.attention_dim},
            {"encoder_layers", d.encoder_layers}}}};
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

}  // namespace

TrainSummary run_training(const RunConfig& cfg, const std::vector<Utterance>& train, const std::vector<Utterance>& dev,
                          AcousticModel& am, LanguageModel* lm, const std::filesystem::path& out_dir) {
  if (train.empty()) throw DataError("training set is empty");
  Trainer trainer(cfg, am, lm);
  const DecodeConfig dcfg = cfg.decode();
  const int batch_size = cfg.batch_size();
  const int epochs = cfg.get_int("epochs");
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed"));

  const bool write = !out_dir.empty();
  std::ofstream metrics, steps_csv, timing;
  if (write) {
    std::filesystem::create_directories(out_dir);
    metrics = open_out(out_dir / "metrics.jsonl");
    steps_csv = open_out(out_dir / "steps.csv");
    timing = open_out(out_dir / "timing.csv");
    steps_csv << "step,epoch,loss\n";
    timing << "step,ms\n";
  }
  auto save = [&](const std::filesystem::path& p) {
    Checkpoint::capture(am.parameters(), checkpoint_metadata(cfg, trainer.steps())).save(p);
    if (lm && lm->parameters() && cfg.get_bool("joint_lm")) {
      std::filesystem::path lp = p;
      lp.replace_extension(".lm.sqf");
      Checkpoint::capture(*lm->parameters(), checkpoint_metadata(cfg, trainer.steps())).save(lp);
    }
  };

  std::vector<const Utterance*> order(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) order[i] = &train[i];

  TrainSummary summary;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    Rng rng = rng_stream(seed, "train.shuffle." + std::to_string(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int n_steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(batch_size));
      const auto t0 = std::chrono::steady_clock::now();
      const double loss = trainer.step(std::span<const Utterance* const>(order.data() + begin, end - begin));
      const auto t1 = std::chrono::steady_clock::now();
      if (!std::isfinite(loss)) throw ContractError("training diverged: non-finite loss at step " + std::to_string(trainer.steps()));
      summary.step_losses.push_back(loss);
      loss_sum += loss;
      ++n_steps;
      if (write) {
        steps_csv << trainer.steps() << ',' << epoch << ',' << fmt(loss) << '\n';
        timing << trainer.steps() << ',' << std::chrono::duration<double, std::milli>(t1 - t0).count() << '\n';
      }
    }
    EpochReport rep;
    rep.epoch = epoch;
    rep.train_loss = loss_sum / n_steps;
    if (!dev.empty()) {
      rep.dev_loss = trainer.mean_loss(dev);
      rep.dev_wer = decode_wer(am, lm, dev, dcfg).wer;
    }
    summary.epochs.push_back(rep);
    if (write) {
      const nlohmann::json rec = {{"epoch", epoch},
                                  {"step", trainer.steps()},
                                  {"train_loss", rep.train_loss},
                                  {"dev_loss", rep.dev_loss},
                                  {"dev_wer", rep.dev_wer}};
      metrics << rec.dump() << '\n' << std::flush;
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03d.sqf", epoch);
      save(out_dir / name);
    }
  }
  if (write) save(out_dir / "final.sqf");
  return summary;
}

void train_recurrent_lm(RecurrentLM& lm, const std::vector<TokenSeq>& text, int epochs, int batch_size, double lr,
                        double clip_norm, std::uint64_t seed) {
  if (text.empty()) throw DataError("LM training text is empty");
  if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  ParameterList* params = lm.parameters();
  set_requires_grad(*params, true);
  ParameterList* groups[] = {params};
  std::vector<std::size_t> order(text.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    Rng rng = rng_stream(seed, "lm.shuffle." + std::to_string(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(batch_size));
      zero_grads(*params);
      const double inv = 1.0 / static_cast<double>(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const TokenSeq& s = text[order[i]];
        Graph g;
        const Var nll = scale(sum(gather_logprob(lm_sequence_logprobs(g, lm, s), s)), -inv);
        g.backward(nll);
      }
      clip_global_norm(groups, clip_norm);
      sgd_update(groups, lr);
    }
  }
}

}  // namespace seqfuse
