#pragma once

#include <stdexcept>
#include <string>

namespace cape {

// Base for every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed document; `path` is a JSON-pointer-like location.
class ParseError : public Error {
 public:
  ParseError(std::string path, const std::string& what)
      : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// Well-formed document whose references or invariants do not hold.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Bad argument to an operation (empty text, ragged matrix, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

// Misconfigured component (empty repertoire, too few correction examples, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Operation requested from a backend that does not support it.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation's precondition.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Network or HTTP failure after the retry budget was spent.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts, int last_status)
      : Error(what), attempts_(attempts), last_status_(last_status) {}
  int attempts() const noexcept { return attempts_; }
  // 0 when no HTTP response was received.
  int last_status() const noexcept { return last_status_; }

 private:
  int attempts_;
  int last_status_;
};

// Scripted backend received a prompt no rule matches.
class UnmatchedPromptError : public Error {
 public:
  using Error::Error;
};

}  // namespace cape
