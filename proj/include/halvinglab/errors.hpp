#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace halvinglab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters, malformed documents, inconsistent data.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed tabular input; the message carries the offending line.
class ParseError : public ConfigError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : ConfigError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// File-system failures (missing inputs, unwritable outputs).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Factorization failures and non-finite objective values.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what, std::vector<double> jitter_ladder = {})
      : Error(what), jitter_ladder_(std::move(jitter_ladder)) {}

  /// Jitter values that were attempted, in order, before giving up.
  const std::vector<double>& jitter_ladder() const noexcept { return jitter_ladder_; }

 private:
  std::vector<double> jitter_ladder_;
};

}  // namespace halvinglab
