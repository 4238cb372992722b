#pragma once

#include <stdexcept>
#include <string>

namespace scaletwin {

// Base for everything the core throws on purpose. The C API maps each
// subclass onto a distinct st_status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SceneError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class NetworkError : public Error {
 public:
  using Error::Error;
};

// Raised when the integrator produces a non-finite or physically absurd value.
class SimulationFault : public Error {
 public:
  SimulationFault(std::string quantity, const std::string& detail)
      : Error("simulation fault in '" + quantity + "': " + detail), quantity_(std::move(quantity)) {}

  const std::string& quantity() const noexcept { return quantity_; }

 private:
  std::string quantity_;
};

}  // namespace scaletwin
