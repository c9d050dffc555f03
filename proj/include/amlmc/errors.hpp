#pragma once

#include <stdexcept>
#include <string>

namespace amlmc {

/// Caller violated a documented precondition (bad index, mismatched mesh, ...).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A single Monte Carlo sample produced a non-finite state and was discarded.
class SampleAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The estimator needed more levels than the configured cap.
class LevelCapExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace amlmc
