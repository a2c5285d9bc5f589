#pragma once

#include <stdexcept>
#include <string>

namespace amrpc {

/// Base of every error raised by the library. `exit_code()` is the process
/// status the command-line front end reports for it.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Invalid configuration or arguments: bad distribution parameters,
/// unsupported dimensions, malformed config files.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Malformed or inconsistent data: row-count mismatches, non-finite values,
/// empty subdomains, unreadable files.
class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// A numerical construction failed (degenerate moments, indefinite Hankel
/// matrix, wrong index method for the model).
class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

class DegenerateMomentsError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Raised when the moment Hankel matrix is not positive definite.
/// Carries the smallest (relative) eigenvalue that failed the check.
class BasisConstructionError : public NumericalError {
 public:
  BasisConstructionError(const std::string& what, double eigenvalue)
      : NumericalError(what), eigenvalue_(eigenvalue) {}
  double eigenvalue() const noexcept { return eigenvalue_; }

 private:
  double eigenvalue_;
};

}  // namespace amrpc
