#pragma once

#include <stdexcept>
#include <string>

namespace gem {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or non-finite data handed to an operation.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Caller broke an operation's precondition (shape mismatch, stale state).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class RankDeficiency : public Error {
 public:
  RankDeficiency(std::string label, std::string what)
      : Error(std::move(what)), label_(std::move(label)) {}
  const std::string& label() const { return label_; }

 private:
  std::string label_;
};

enum class ParseErrorKind { BadMagic, BadVersion, Truncated, Inconsistent };

inline const char* toString(ParseErrorKind k) {
  switch (k) {
    case ParseErrorKind::BadMagic: return "bad magic";
    case ParseErrorKind::BadVersion: return "unsupported version";
    case ParseErrorKind::Truncated: return "truncated payload";
    case ParseErrorKind::Inconsistent: return "inconsistent header";
  }
  return "unknown";
}

class ParseError : public Error {
 public:
  ParseError(ParseErrorKind kind, const std::string& detail)
      : Error(std::string(toString(kind)) + ": " + detail), kind_(kind) {}
  ParseErrorKind kind() const { return kind_; }

 private:
  ParseErrorKind kind_;
};

// Optimization produced a NaN/Inf loss.
class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

}  // namespace gem
