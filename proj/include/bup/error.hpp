#pragma once

#include <stdexcept>
#include <string>

namespace bup {

/// Malformed or inconsistent user input (bad indices, shape mismatch, parse failure).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A mathematical invariant was violated (non-positive variance, non-SPD covariance).
/// Signals a bug upstream rather than bad input.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Training diverged or produced non-finite values.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem failure while reading or writing artifacts.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bup
