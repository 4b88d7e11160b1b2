#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace advtune {

// Base for every error raised by the library. Subclasses mirror the error
// kinds each operation can report so callers (and the CLI exit-code mapping)
// can dispatch on type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent configuration: incompatible layer chains, bad split counts,
// out-of-range search budgets.
class SpecError : public Error {
 public:
  using Error::Error;
};

// Tensor shape disagrees with what the network expects.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Caller-supplied data violates a precondition (labels out of range, values
// outside the clip range).
class InputError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered in a gradient or parameter update.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::ptrdiff_t layer = -1)
      : Error(what), layer_(layer) {}
  std::ptrdiff_t layer() const noexcept { return layer_; }

 private:
  std::ptrdiff_t layer_;
};

// Malformed IDX / model / CSV file.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Training diverged; carries where it happened.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t epoch, std::size_t batch)
      : Error(what + " (epoch " + std::to_string(epoch) + ", batch " +
              std::to_string(batch) + ")"),
        epoch_(epoch),
        batch_(batch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

}  // namespace advtune
