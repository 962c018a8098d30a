#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace creole {

// Base class for recoverable toolkit errors (bad input files, bad configs).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A malformed input file. line() is 1-based, 0 when not tied to a line.
class FormatError : public Error {
 public:
  FormatError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Raised when an activation, loss or gradient stops being finite.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace creole
