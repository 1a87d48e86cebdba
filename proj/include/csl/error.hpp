#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace csl {

// Base class for every error raised by the library. Input/usage problems
// (bad files, invalid configs, shape mismatches) all derive from this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ": line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace csl
