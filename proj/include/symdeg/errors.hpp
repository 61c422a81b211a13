#pragma once

#include <stdexcept>
#include <string>

namespace symdeg {

/// Base class for all errors raised by the library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Syntax error while parsing an expression. Carries 1-based position.
struct ParseError : Error {
  ParseError(const std::string& msg, int line_, int column_)
      : Error(msg + " (line " + std::to_string(line_) + ", column " +
              std::to_string(column_) + ")"),
        line(line_),
        column(column_) {}
  int line;
  int column;
};

/// Runtime error during expression evaluation (unbound variable,
/// division by zero, conj under differentiation).
struct EvalError : Error {
  using Error::Error;
};

/// Problem-document schema violation. `path` names the offending JSON
/// location, e.g. "/variables/xi".
struct DocumentError : Error {
  DocumentError(const std::string& msg, std::string path_)
      : Error(msg + " [at " + path_ + "]"), path(std::move(path_)) {}
  std::string path;
};

/// A matrix that must be inverted is singular or past the condition cap.
/// The message carries the located witness (chart point).
struct SingularMatrixError : Error {
  SingularMatrixError(const std::string& msg, double condition_)
      : Error(msg), condition(condition_) {}
  double condition;
};

}  // namespace symdeg
