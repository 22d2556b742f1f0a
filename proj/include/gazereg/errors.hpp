#pragma once

#include <stdexcept>
#include <string>

namespace gazereg {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes disagree (matrix products, field/heatmap dims).
class DimensionError : public Error {
public:
  using Error::Error;
};

/// Argument outside its mathematical domain (sigma <= 0, k > P, ...).
class DomainError : public Error {
public:
  using Error::Error;
};

/// A distribution was requested from something with no mass.
class ZeroMassError : public Error {
public:
  using Error::Error;
};

class BoundsError : public Error {
public:
  using Error::Error;
};

/// A patch grid or frame does not tile the way the caller asked.
class GeometryError : public Error {
public:
  using Error::Error;
};

/// Malformed bytes: bad magic, bad header, bad CSV row.
class FormatError : public Error {
public:
  using Error::Error;
};

/// Payload shorter (or longer) than its header promises.
class LengthError : public FormatError {
public:
  using FormatError::FormatError;
};

/// NaN or Inf escaped a computation.
class NumericError : public Error {
public:
  using Error::Error;
};

class EmptyInputError : public Error {
public:
  using Error::Error;
};

class PlacementError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

/// Training produced a non-finite loss. Carries the last epoch that finished cleanly
/// (epochs are numbered from 1; 0 means the first epoch already failed).
class TrainingDiverged : public Error {
public:
  TrainingDiverged(const std::string &what, int last_finite_epoch)
      : Error(what), last_finite_epoch_(last_finite_epoch) {}
  int last_finite_epoch() const { return last_finite_epoch_; }

private:
  int last_finite_epoch_;
};

} // namespace gazereg
