#pragma once

#include <stdexcept>
#include <string>

namespace sbl {

/// Base of every error raised by the library. Each subclass names one
/// contract violation so callers (and the CLI exit-code mapping) can
/// dispatch on type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class OverflowError : public Error {
 public:
  using Error::Error;
};

class UnsupportedConvolution : public Error {
 public:
  using Error::Error;
};

class UnsupportedFamily : public Error {
 public:
  using Error::Error;
};

class RootNotBracketed : public Error {
 public:
  using Error::Error;
};

class NoRoot : public Error {
 public:
  using Error::Error;
};

class InvalidParameters : public Error {
 public:
  using Error::Error;
};

class NotPSD : public Error {
 public:
  using Error::Error;
};

class TruncationExhausted : public Error {
 public:
  using Error::Error;
};

class DegenerateTilt : public Error {
 public:
  using Error::Error;
};

/// Experiment configuration rejected at load time. `field` is a JSON
/// pointer ("/epsilon_grid/1") or "line N" for syntax errors.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace sbl
