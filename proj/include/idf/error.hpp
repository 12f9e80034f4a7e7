#pragma once

#include <stdexcept>
#include <string>

namespace idf {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Input text could not be parsed. Carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Input parsed but broke a domain invariant (negative depth, duplicate stamp).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A statistical estimator could not produce a usable answer for the data.
class EstimationError : public Error {
 public:
  using Error::Error;
};

}  // namespace idf
