#pragma once

#include <stdexcept>
#include <string>

namespace demask {

/// Invalid task, model or experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. `line()` is 1-based, 0 when not line-oriented.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Operation invoked on an object in the wrong state (e.g. no masked slot left).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Caller passed arguments that violate a precondition.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A loss or gradient became NaN/inf during training.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::string dump)
      : std::runtime_error(what), dump_(std::move(dump)) {}

  /// JSON dump of the offending episode.
  const std::string& dump() const { return dump_; }

 private:
  std::string dump_;
};

}  // namespace demask
