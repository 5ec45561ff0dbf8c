#pragma once

#include <stdexcept>
#include <string>

namespace seatsim {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model or parameter failed validation. `field()` names the offending field.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Configuration problem; `path()` is the dotted key path (e.g. "run.dt_s").
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Non-finite state after a step.
class DivergenceError : public Error {
 public:
  DivergenceError(double t, std::string coordinate)
      : Error("simulation diverged at t=" + std::to_string(t) + " s in " + coordinate),
        time_(t),
        coordinate_(std::move(coordinate)) {}
  double time() const noexcept { return time_; }
  const std::string& coordinate() const noexcept { return coordinate_; }

 private:
  double time_;
  std::string coordinate_;
};

/// A foam element inverted (volume <= 0).
class ElementError : public Error {
 public:
  ElementError(std::size_t index, const std::string& what)
      : Error("element " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class AnalysisError : public Error {
 public:
  using Error::Error;
};

class ComparisonError : public Error {
 public:
  using Error::Error;
};

}  // namespace seatsim
