#pragma once

#include <stdexcept>
#include <string>

namespace gridfm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid GridConfig, TrainConfig, ExperimentConfig and friends.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation's precondition (e.g. stepping a finished
// episode).
class UsageError : public Error {
 public:
  using Error::Error;
};

class RenderError : public Error {
 public:
  RenderError(const std::string& message, std::string token)
      : Error(message), token_(std::move(token)) {}
  const std::string& token() const { return token_; }

 private:
  std::string token_;
};

// Carries the unparsed model output so it can be logged.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::string raw)
      : Error(message), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

// Training produced a NaN/Inf loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace gridfm
