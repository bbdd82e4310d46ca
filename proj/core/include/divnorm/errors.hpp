#pragma once

#include <stdexcept>
#include <string>

namespace divnorm {

// A caller broke a documented precondition (shape mismatch, label out of
// range, ...). These indicate bugs in calling code, not bad data.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Numerically invalid input: non-finite entries, non-positive trace, ...
class InvalidInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotPositiveDefiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Batch too small to carry statistics (n < 2).
class DegenerateBatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Eval-mode whitening requested before any training step populated the
// running statistics.
class UninitializedStatsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. Carries a 1-based line number when known (0 = n/a).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, int line = 0)
      : std::runtime_error(line > 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient during optimization; message names the tensor
// and the epoch/batch context.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace divnorm
