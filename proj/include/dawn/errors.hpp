#pragma once

#include <stdexcept>
#include <string>

namespace dawn {

/// Invalid configuration: bad shapes, unknown ids, inconsistent hyperparameters.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API misuse by the caller (e.g. backward on a non-scalar, sampling an empty buffer).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Numerical failure that must stop a run (NaN loss, NaN action, non-finite gradient).
class RunAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dawn
