#pragma once

#include <stdexcept>
#include <string>

namespace mollow {

/// Base of every error raised by the library. `exit_code()` maps the error
/// onto the command-line tool's exit status.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Precondition failure on an argument (bad spin, rank out of range, ...).
class DomainError : public Error {
public:
  using Error::Error;
};

/// Malformed or invalid scenario/sweep configuration.
class ConfigError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Trace, Hermiticity or positivity drifted past tolerance during a run.
class InvariantError : public Error {
public:
  InvariantError(const std::string& what, long step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  long step() const noexcept { return step_; }
  int exit_code() const noexcept override { return 3; }

private:
  long step_;
};

/// Peaks could not be matched to a single Mollow template.
class ClassificationError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

/// A linear probe was pointed at a manifold that carries no rank-2 multipoles.
class NoAlignmentObservable : public DomainError {
public:
  using DomainError::DomainError;
};

/// Wraps a module error with the name of the pipeline stage it came from.
class StageError : public Error {
public:
  StageError(std::string stage, const Error& inner)
      : Error(stage + ": " + inner.what()),
        stage_(std::move(stage)),
        code_(inner.exit_code()) {}
  const std::string& stage() const noexcept { return stage_; }
  int exit_code() const noexcept override { return code_; }

private:
  std::string stage_;
  int code_;
};

}  // namespace mollow
