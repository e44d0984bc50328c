#pragma once

// The `seqfuse` subcommands. Each takes a fully resolved RunConfig and reports
// progress on `log`; run_cli maps errors to exit codes.

#include "seqfuse/config.hpp"
#include "seqfuse/metrics.hpp"
#include "seqfuse/trainer.hpp"

#include <iosfwd>
#include <memory>

namespace seqfuse {

enum ExitCode : int { kExitOk = 0, kExitOther = 1, kExitConfig = 2, kExitData = 3, kExitCheckpoint = 4 };

/// External LM named by lm_type / lm_path. ConfigError if lm_path is unset or
/// missing.
std::unique_ptr<LanguageModel> load_lm(const RunConfig& cfg);

/// Writes the synthetic dataset to data_dir.
void cmd_gen(const RunConfig& cfg, std::ostream& log);

/// Trains the configured criterion into work_dir. criterion=lm trains the
/// external LM instead and writes it to lm_path (default work_dir/lm.ngram or
/// work_dir/lm.sqf).
TrainSummary cmd_train(const RunConfig& cfg, std::ostream& log);

/// Decodes `split` with `checkpoint` (default work_dir/final.sqf) and writes
/// JSON lines {"id", "hyp", "score"} to hyp_path (default
/// work_dir/hyp.<split>.jsonl). Returns the file written.
std::filesystem::path cmd_decode(const RunConfig& cfg, std::ostream& log);

/// Scores hyp_path against the references of `split`.
WerReport cmd_eval(const RunConfig& cfg, std::ostream& out);

/// Trains and decodes one run per grid point; writes work_dir/sweep.csv.
std::filesystem::path cmd_sweep(const RunConfig& cfg, std::ostream& log);

struct BenchRow {
  std::string criterion;
  double ms_per_step = 0.0;
  double slowdown = 0.0;
};

/// Mean step time of ce, local and mmi on identical batches, model and seed;
/// writes work_dir/bench.csv.
std::vector<BenchRow> cmd_bench(const RunConfig& cfg, std::ostream& out);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace seqfuse
