#pragma once

#include <stdexcept>
#include <string>

namespace qpen {

// Caller violated a precondition (bad dimensions, bad configuration, ...).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A point was queried outside the domain of the regularizer.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Non-finite values appeared during an iteration.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, long outer, long inner = -1)
      : std::runtime_error(what), outer_(outer), inner_(inner) {}

  long outer() const { return outer_; }
  long inner() const { return inner_; }

 private:
  long outer_;
  long inner_;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace qpen
