#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <vector>

namespace seqfuse {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatX = Matrix<double>;
using RowVecX = RowVector<double>;

using TokenId = int;
using TokenSeq = std::vector<TokenId>;

/// End of sentence. A regular output token; every scored sequence ends with it.
inline constexpr TokenId kEos = 0;
/// Begin of sentence. Input-only: never emitted and never scored.
inline constexpr TokenId kBos = -1;

// Error taxonomy. The CLI maps ConfigError/DataError/CheckpointError onto exit codes.

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// True iff `tokens` is non-empty, ends in EOS and has no earlier EOS.
inline bool is_eos_terminated(const TokenSeq& tokens) {
  if (tokens.empty() || tokens.back() != kEos) return false;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i)
    if (tokens[i] == kEos) return false;
  return true;
}

}  // namespace seqfuse
