#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace flowcut {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class UnsupportedDtype : public Error {
 public:
  using Error::Error;
};

class ManifestError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class DegenerateFeature : public Error {
 public:
  using Error::Error;
};

class DegeneratePartition : public Error {
 public:
  using Error::Error;
};

/// Eigensolver ran out of its matrix-vector budget.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double best_residual)
      : Error(what), best_residual_(best_residual) {}
  double best_residual() const noexcept { return best_residual_; }

 private:
  double best_residual_;
};

class PairingError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class RoundError : public Error {
 public:
  using Error::Error;
};

/// Raised when externally produced masks are missing or malformed.
class ExchangeError : public Error {
 public:
  ExchangeError(const std::string& what, std::vector<std::string> offenders);
  const std::vector<std::string>& offenders() const noexcept { return offenders_; }

 private:
  std::vector<std::string> offenders_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace flowcut
