#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rsopt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every regime assigns zero density to an observation: the model cannot
/// explain the data point (typically an observation outside the support).
class AllZeroLikelihood : public Error {
 public:
  explicit AllZeroLikelihood(std::size_t index)
      : Error("all regimes assign zero density to observation " +
              std::to_string(index)),
        index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class SingularCovariance : public Error {
 public:
  using Error::Error;
};

class DegenerateCandidate : public Error {
 public:
  using Error::Error;
};

class InvalidPolicy : public Error {
 public:
  using Error::Error;
};

class InsufficientSamples : public Error {
 public:
  using Error::Error;
};

/// A quantity (true objective, regime labels) does not exist for this input.
class Unavailable : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration or data file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace rsopt
