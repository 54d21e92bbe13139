#pragma once

#include <stdexcept>
#include <string>

namespace moire {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: out-of-range parameters, malformed config. CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Grid too coarse or not covering the pattern support.
class SamplingError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Operation requires kappa1 == kappa2 (or theta1 == theta2).
class UnsupportedFormError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Argument outside the mathematical domain of a formula (e.g. sqrt of a negative).
class DomainError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Numerical failure: no bracket, no convergence, lost support. CLI exit code 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class SolverError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NoPeakError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class FitError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class StepSizeError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SequenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// A modelling assumption (e.g. equal widths of a wavepacket pair) does not hold.
class ModelAssumptionError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ResolutionError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ClippingError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace moire
