#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rsvqa {

// Caller passed something that violates an operation's precondition.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Experiment or model configuration is inconsistent.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A training stage was requested before its prerequisite stage produced a
// checkpoint.
class StagingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Files on disk are missing, unreadable or malformed.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace rsvqa
