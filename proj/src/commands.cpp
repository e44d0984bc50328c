#include "seqfuse/commands.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace seqfuse {

namespace fs = std::filesystem;

namespace {

fs::path split_path(const RunConfig& cfg, std::string_view split) {
  return cfg.data_dir() / (std::string(split) + ".jsonl");
}

void check_utterances(const RunConfig& cfg, const std::vector<Utterance>& utts, const fs::path& source) {
  const int feature_dim = cfg.get_int("feature_dim");
  const int vocab = cfg.get_int("vocab_size");
  for (const auto& u : utts) {
    if (u.feats.rows() == 0 || u.feats.cols() != feature_dim)
      throw DataError(source.string() + ": utterance " + u.id + " has " + std::to_string(u.feats.cols()) +
                      "-dim features, config feature_dim is " + std::to_string(feature_dim));
    for (TokenId w : u.tokens)
      if (w < 0 || w >= vocab)
        throw DataError(source.string() + ": utterance " + u.id + " has token " + std::to_string(w) +
                        " outside vocab_size " + std::to_string(vocab));
  }
}

std::vector<Utterance> load_split(const RunConfig& cfg, std::string_view split) {
  const fs::path p = split_path(cfg, split);
  auto utts = read_utterances(p);
  check_utterances(cfg, utts, p);
  return utts;
}

fs::path default_lm_path(const RunConfig& cfg) {
  return cfg.work_dir() / (cfg.get_string("lm_type") == "rnn" ? "lm.sqf" : "lm.ngram");
}

fs::path hyp_path(const RunConfig& cfg) {
  const std::string p = cfg.get_string("hyp_path");
  return p.empty() ? cfg.work_dir() / ("hyp." + cfg.get_string("split") + ".jsonl") : fs::path(p);
}

std::uint64_t seed_of(const RunConfig& cfg) { return static_cast<std::uint64_t>(cfg.get_int("seed")); }

void require_file(const RunConfig& cfg, std::string_view key, std::string_view why) {
  const std::string p = cfg.get_string(key);
  if (p.empty()) throw ConfigError(std::string(key) + " must be set " + std::string(why));
  if (!fs::exists(p)) throw ConfigError(std::string(key) + " = " + p + " does not exist");
}

AcousticModel make_am(const RunConfig& cfg) {
  AcousticModel am(cfg.am_dims(), seed_of(cfg));
  if (const std::string init = cfg.get_string("init_checkpoint"); !init.empty())
    Checkpoint::load(init).restore(am.parameters());
  return am;
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::unique_ptr<LanguageModel> load_lm(const RunConfig& cfg) {
  require_file(cfg, "lm_path", "(train one with criterion = lm)");
  const fs::path p = cfg.get_string("lm_path");
  if (cfg.get_string("lm_type") == "ngram") {
    auto lm = std::make_unique<NGramLM>(NGramLM::load(p));
    if (lm->vocab_size() != cfg.get_int("vocab_size"))
      throw ConfigError("LM " + p.string() + " has vocabulary " + std::to_string(lm->vocab_size()) +
                        ", config vocab_size is " + cfg.raw("vocab_size"));
    return lm;
  }
  auto lm = std::make_unique<RecurrentLM>(cfg.lm_dims(), seed_of(cfg));
  Checkpoint::load(p).restore(*lm->parameters());
  return lm;
}

void cmd_gen(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Dataset ds = generate_dataset(cfg.task());
  write_dataset(cfg.data_dir(), ds);
  log << "wrote " << ds.train.size() << " train, " << ds.dev.size() << " dev, " << ds.test.size() << " test, "
      << ds.text_only.size() << " text-only sentences to " << cfg.data_dir().string() << '\n';
}

TrainSummary cmd_train(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Criterion crit = cfg.criterion();

  if (crit == Criterion::kLm) {
    const std::vector<TokenSeq> text = read_text(cfg.data_dir() / "text.txt");
    const std::string out_str = cfg.get_string("lm_path");
    const fs::path out = out_str.empty() ? default_lm_path(cfg) : fs::path(out_str);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    if (cfg.get_string("lm_type") == "ngram") {
      ngram_train(text, cfg.get_int("lm_order"), cfg.get_int("vocab_size"), cfg.get_double("lm_kappa")).save(out);
    } else {
      RecurrentLM lm(cfg.lm_dims(), seed_of(cfg));
      train_recurrent_lm(lm, text, cfg.get_int("lm_epochs"), cfg.batch_size(), cfg.get_double("lm_lr"),
                         cfg.get_double("clip_norm"), seed_of(cfg));
      Checkpoint::capture(lm.params(), {{"criterion", "lm"}, {"seed", cfg.get_int("seed")}}).save(out);
    }
    log << "wrote LM to " << out.string() << '\n';
    return {};
  }

  // Every precondition is checked before any data is read or model built.
  if (crit == Criterion::kMmi) require_file(cfg, "init_checkpoint", "for criterion = mmi (start from a converged ce model)");
  if (const std::string init = cfg.get_string("init_checkpoint"); !init.empty() && !fs::exists(init))
    throw ConfigError("init_checkpoint = " + init + " does not exist");
  std::unique_ptr<LanguageModel> lm;
  if (crit != Criterion::kCe || cfg.decode().mode != DecodeMode::kAmOnly) lm = load_lm(cfg);

  const auto train = load_split(cfg, "train");
  const auto dev = load_split(cfg, "dev");
  AcousticModel am = make_am(cfg);

  fs::create_directories(cfg.work_dir());
  {
    std::ofstream resolved(cfg.work_dir() / "config.txt", std::ios::binary);
    resolved << cfg.print();
  }
  const TrainSummary summary = run_training(cfg, train, dev, am, lm.get(), cfg.work_dir());
  for (const auto& e : summary.epochs)
    log << "epoch " << e.epoch << " train_loss " << e.train_loss << " dev_loss " << e.dev_loss << " dev_wer "
        << e.dev_wer << '\n';
  return summary;
}

fs::path cmd_decode(const RunConfig& cfg_in, std::ostream& log) {
  cfg_in.validate();
  RunConfig cfg = cfg_in;
  const std::string ck = cfg.get_string("checkpoint");
  const fs::path ck_path = ck.empty() ? cfg.work_dir() / "final.sqf" : fs::path(ck);
  const Checkpoint checkpoint = Checkpoint::load(ck_path);
  // "auto" pairs the decode mode with the criterion the checkpoint was trained with.
  if (cfg.raw("decode_mode") == "auto" && checkpoint.metadata.contains("criterion"))
    cfg.set("criterion", checkpoint.metadata["criterion"].get<std::string>());
  const DecodeConfig dcfg = cfg.decode();

  AcousticModel am(cfg.am_dims(), seed_of(cfg));
  checkpoint.restore(am.parameters());
  std::unique_ptr<LanguageModel> lm;
  if (dcfg.mode != DecodeMode::kAmOnly) lm = load_lm(cfg);

  const auto utts = load_split(cfg, cfg.get_string("split"));
  const fs::path out_path = hyp_path(cfg);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw DataError("cannot write " + out_path.string());
  for (const auto& u : utts) {
    const ScoredSequence best = beam_search(am, lm.get(), u.feats, dcfg).best();
    const nlohmann::json rec = {{"id", u.id}, {"hyp", strip_eos(best.tokens)}, {"score", best.score}};
    out << rec.dump() << '\n';
  }
  log << "decoded " << utts.size() << " utterances (" << to_string(dcfg.mode) << ") to " << out_path.string() << '\n';
  return out_path;
}

WerReport cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const auto refs = read_utterances(split_path(cfg, cfg.get_string("split")));
  const fs::path hp = hyp_path(cfg);
  std::ifstream in(hp);
  if (!in) throw DataError("cannot open hypothesis file " + hp.string());
  std::map<std::string, TokenSeq> hyps;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      const auto id = rec.at("id").get<std::string>();
      if (!hyps.emplace(id, strip_eos(rec.at("hyp").get<TokenSeq>())).second)
        throw DataError(hp.string() + ": duplicate id " + id);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(hp.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }

  std::vector<std::string> missing;
  std::set<std::string> ref_ids;
  std::vector<std::pair<TokenSeq, TokenSeq>> pairs;
  for (const auto& r : refs) {
    ref_ids.insert(r.id);
    auto it = hyps.find(r.id);
    if (it == hyps.end())
      missing.push_back(r.id);
    else
      pairs.emplace_back(strip_eos(r.tokens), it->second);
  }
  std::vector<std::string> extra;
  for (const auto& [id, _] : hyps)
    if (!ref_ids.count(id)) extra.push_back(id);
  if (!missing.empty() || !extra.empty()) {
    auto list = [](const std::vector<std::string>& ids) {
      std::string s;
      for (std::size_t i = 0; i < ids.size() && i < 10; ++i) s += (i ? ", " : "") + ids[i];
      if (ids.size() > 10) s += ", ... (" + std::to_string(ids.size()) + " total)";
      return s;
    };
    std::string msg = "hypothesis ids do not match references";
    if (!missing.empty()) msg += "; missing: " + list(missing);
    if (!extra.empty()) msg += "; extra: " + list(extra);
    throw DataError(msg);
  }

  const WerReport rep = corpus_wer(pairs);
  char buf[160];
  std::snprintf(buf, sizeof buf, "WER %.2f%% [%d / %ld, S %d, I %d, D %d]\n", rep.wer, rep.errors.distance,
                rep.ref_tokens, rep.errors.substitutions, rep.errors.insertions, rep.errors.deletions);
  out << buf;
  return rep;
}

fs::path cmd_sweep(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Scales base = cfg.scales();
  auto axis = [](std::vector<double> v, double fallback) { return v.empty() ? std::vector<double>{fallback} : v; };
  const auto abs_grid = axis(cfg.get_list("sweep_gamma_abs"), base.gamma_abs());
  const auto rel_grid = axis(cfg.get_list("sweep_gamma_rel"), base.alpha > 0 ? base.gamma_rel() : 0.0);
  const auto den_grid = axis(cfg.get_list("sweep_gamma_den"), base.gamma_den);

  fs::create_directories(cfg.work_dir());
  const fs::path csv_path = cfg.work_dir() / "sweep.csv";
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw DataError("cannot write " + csv_path.string());
  csv << "criterion,gamma_abs,gamma_rel,gamma_den,dev_wer,seed\n";

  int point = 0;
  for (double ga : abs_grid)
    for (double gr : rel_grid)
      for (double gd : den_grid) {
        char dir[32];
        std::snprintf(dir, sizeof dir, "point_%03d", point++);
        double wer = std::nan("");
        try {
          RunConfig pc = cfg;
          pc.set("alpha", fmt(ga));
          pc.set("beta", fmt(ga * gr));
          pc.set("gamma_den", fmt(gd));
          pc.set("work_dir", (cfg.work_dir() / "sweep" / dir).string());
          std::ostringstream sink;
          cmd_train(pc, sink);
          pc.set("checkpoint", (pc.work_dir() / "final.sqf").string());
          pc.set("split", "dev");
          pc.set("hyp_path", "");
          cmd_decode(pc, sink);
          wer = cmd_eval(pc, sink).wer;
        } catch (const std::exception& e) {
          log << dir << " failed: " << e.what() << '\n';
        }
        csv << cfg.raw("criterion") << ',' << fmt(ga) << ',' << fmt(gr) << ',' << fmt(gd) << ','
            << (std::isnan(wer) ? std::string("nan") : fmt(wer)) << ',' << cfg.raw("seed") << '\n'
            << std::flush;
        log << dir << " gamma_abs " << ga << " gamma_rel " << gr << " gamma_den " << gd << " dev_wer " << wer << '\n';
      }
  return csv_path;
}

std::vector<BenchRow> cmd_bench(const RunConfig& cfg_in, std::ostream& out) {
  cfg_in.validate();
  RunConfig base = cfg_in;
  base.set("criterion", "ce");
  const int batch_size = base.batch_size();  // shared by all criteria
  const int warmup = cfg_in.get_int("bench_warmup");
  const int steps = cfg_in.get_int("bench_steps");
  if (warmup < 0 || steps < 1) throw ConfigError("bench_steps must be >= 1 and bench_warmup >= 0");

  std::unique_ptr<LanguageModel> lm = load_lm(cfg_in);
  const auto train = load_split(cfg_in, "train");
  if (train.empty()) throw DataError("training set is empty");
  const AcousticModel init = make_am(base);

  std::vector<BenchRow> rows;
  for (const char* crit : {"ce", "local", "mmi"}) {
    RunConfig c = base;
    c.set("criterion", crit);
    c.set("batch_size", std::to_string(batch_size));
    AcousticModel am = init;
    Trainer trainer(c, am, lm.get());
    std::vector<const Utterance*> batch;
    std::size_t cursor = 0;
    double total_ms = 0.0;
    for (int s = 0; s < warmup + steps; ++s) {
      batch.clear();
      for (int b = 0; b < batch_size; ++b) batch.push_back(&train[cursor++ % train.size()]);
      const auto t0 = std::chrono::steady_clock::now();
      trainer.step(batch);
      const auto t1 = std::chrono::steady_clock::now();
      if (s >= warmup) total_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    rows.push_back({crit, total_ms / steps, 0.0});
  }
  for (auto& r : rows) r.slowdown = r.ms_per_step / rows.front().ms_per_step;

  fs::create_directories(cfg_in.work_dir());
  std::ofstream csv(cfg_in.work_dir() / "bench.csv", std::ios::binary);
  csv << "criterion,ms_per_step,slowdown\n";
  out << "criterion,ms_per_step,slowdown\n";
  for (const auto& r : rows) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s,%.3f,%.2f\n", r.criterion.c_str(), r.ms_per_step, r.slowdown);
    csv << buf;
    out << buf;
  }
  return rows;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sequence training with language model fusion on a synthetic recognition task", "seqfuse"};
  std::string command, config_path;
  std::vector<std::string> overrides;
  app.add_option("command", command, "gen | train | decode | eval | sweep | bench")
      ->required()
      ->check(CLI::IsMember({"gen", "train", "decode", "eval", "sweep", "bench"}));
  app.add_option("--config", config_path, "Flat key = value config file")->required();
  app.add_option("--set", overrides, "Override a config key (key=value); repeatable");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "seqfuse: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    RunConfig cfg = RunConfig::load(config_path);
    for (const auto& o : overrides) cfg.apply_override(o);
    if (command == "gen") cmd_gen(cfg, out);
    else if (command == "train") cmd_train(cfg, out);
    else if (command == "decode") cmd_decode(cfg, out);
    else if (command == "eval") cmd_eval(cfg, out);
    else if (command == "sweep") cmd_sweep(cfg, out);
    else cmd_bench(cfg, out);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "seqfuse: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "seqfuse: data error: " << e.what() << '\n';
    return kExitData;
  } catch (const CheckpointError& e) {
    err << "seqfuse: checkpoint error: " << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    err << "seqfuse: error: " << e.what() << '\n';
    return kExitOther;
  }
}

}  // namespace seqfuse
