#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flockwatch {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value violates a type invariant or an operation precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Malformed input text. Carries the 1-based line (0 when not line-oriented)
// and the offending field or element name when known.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::string field, const std::string& what)
      : Error(format(line, field, what)), line_(line), field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  static std::string format(std::size_t line, const std::string& field,
                            const std::string& what) {
    std::string msg;
    if (line > 0) msg += "line " + std::to_string(line) + ": ";
    if (!field.empty()) msg += "'" + field + "': ";
    return msg + what;
  }

  std::size_t line_;
  std::string field_;
};

// Configuration document rejected; key() names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(key.empty() ? what : "'" + key + "': " + what), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace flockwatch
