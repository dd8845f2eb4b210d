#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cpdalign {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A decomposition failed to converge or produced non-finite output.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double condition_estimate)
      : Error(what), condition_estimate_(condition_estimate) {}
  double condition_estimate() const { return condition_estimate_; }

 private:
  double condition_estimate_;
};

// Caller broke a documented precondition (shape, symmetry, range).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid or conflicting configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. `line` is 1-based; 0 when no line applies.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// A pipeline stage could not produce a result (empty dictionary, all posterior
// mass on the outlier component, ...).
class StageError : public Error {
 public:
  using Error::Error;
};

}  // namespace cpdalign
