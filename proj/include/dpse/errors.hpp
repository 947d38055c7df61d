#pragma once

#include <stdexcept>
#include <string>

namespace dpse {

/// Violated precondition or shape/kind mismatch at an API boundary.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Invalid user-supplied configuration (bad bounds, counts, paths).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// NaN/Inf produced where finite values are required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Corrupt or incompatible persisted artifact.
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Not enough data for a heuristic; callers fall back to a fixed pattern.
struct InsufficientDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Input points are degenerate (too few, or zero spread).
struct DegenerateInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dpse
