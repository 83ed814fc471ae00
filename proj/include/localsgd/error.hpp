// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace localsgd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  DimensionError(std::size_t expected, std::size_t got)
      : Error("dimension mismatch: expected " + std::to_string(expected) +
              ", got " + std::to_string(got)) {}
};

/// Malformed input text. `line` is 1-based, 0 when not line-specific.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Dataset missing, checksum mismatch, or shape differs from the manifest.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or invalid configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A named hypothesis of a bound or planner does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// An iterative procedure hit its cap before reaching tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// A simulated iterate became non-finite or blew past the divergence guard.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t step, std::size_t node)
      : Error("iterate diverged at t=" + std::to_string(step) +
              " on node " + std::to_string(node)),
        step_(step),
        node_(node) {}
  std::size_t step() const noexcept { return step_; }
  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t step_;
  std::size_t node_;
};

}  // namespace localsgd
