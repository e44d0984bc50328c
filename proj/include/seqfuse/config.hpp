#pragma once

// Flat `key = value` run configuration. Every key is declared up front with a
// type and default; unknown keys and unparsable values are ConfigErrors.

#include "seqfuse/acoustic_model.hpp"
#include "seqfuse/criteria.hpp"
#include "seqfuse/decoding.hpp"
#include "seqfuse/language_model.hpp"
#include "seqfuse/task.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace seqfuse {

enum class Criterion { kCe, kLocal, kMmi, kLm };

Criterion parse_criterion(std::string_view s);
std::string_view to_string(Criterion c);

class RunConfig {
 public:
  /// All keys at their defaults.
  RunConfig();

  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);
  /// Every key, one per line, in declaration order.
  std::string print() const;

  /// Applies `key=value`; throws ConfigError for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  void apply_override(std::string_view assignment);
  const std::string& raw(std::string_view key) const;

  int get_int(std::string_view key) const;
  double get_double(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  std::string get_string(std::string_view key) const;
  /// Empty optional when the value is "auto".
  std::optional<double> get_auto_double(std::string_view key) const;
  std::vector<double> get_list(std::string_view key) const;

  bool operator==(const RunConfig& o) const { return values_ == o.values_; }

  // Typed views over groups of keys.
  TaskConfig task() const;
  AcousticModelDims am_dims() const;
  RecurrentLMDims lm_dims() const;
  Criterion criterion() const;
  Scales scales() const;
  /// Decode settings for this run; "auto" picks the mode that matches the
  /// training criterion (local fusion decodes local, others shallow) and the
  /// training scales.
  DecodeConfig decode() const;
  double learning_rate() const;
  int batch_size() const;

  std::filesystem::path data_dir() const { return get_string("data_dir"); }
  std::filesystem::path work_dir() const { return get_string("work_dir"); }

  /// Cross-key checks that do not need the filesystem.
  void validate() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

}  // namespace seqfuse
