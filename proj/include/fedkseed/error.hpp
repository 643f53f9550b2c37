#pragma once

#include <stdexcept>
#include <string>

namespace fedkseed {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid model/experiment/partition configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition (dimension mismatch, bad length, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient encountered during training.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double loss_plus, double loss_minus)
      : Error(what), loss_plus_(loss_plus), loss_minus_(loss_minus) {}

  double loss_plus() const noexcept { return loss_plus_; }
  double loss_minus() const noexcept { return loss_minus_; }

 private:
  double loss_plus_;
  double loss_minus_;
};

// Malformed wire message or a history referencing a seed outside the pool.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedkseed
