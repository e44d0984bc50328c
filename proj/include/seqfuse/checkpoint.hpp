#pragma once

// Binary parameter snapshots.
//
//   "SQF1"
//   u64 entry count
//   per entry: u64 name length, name (UTF-8), u64 rank, rank x u64 extents,
//              prod(extents) x f64 values (row-major)
//   u64 metadata length, metadata (UTF-8 JSON)
//
// All integers and reals are little-endian.

#include "seqfuse/tensor.hpp"

#include <json.hpp>

#include <filesystem>

namespace seqfuse {

struct Checkpoint {
  struct Entry {
    std::string name;
    std::vector<std::uint64_t> extents;
    std::vector<double> values;

    bool operator==(const Entry&) const = default;
  };

  std::vector<Entry> entries;
  nlohmann::json metadata = nlohmann::json::object();

  static Checkpoint capture(const ParameterList& params, nlohmann::json metadata = nlohmann::json::object());

  /// Copies values into `params`. Throws CheckpointError listing missing and
  /// extra names, or the first shape mismatch, before touching anything.
  void restore(ParameterList& params) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);

  bool operator==(const Checkpoint& o) const { return entries == o.entries && metadata == o.metadata; }
};

}  // namespace seqfuse
