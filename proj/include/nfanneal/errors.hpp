#ifndef NFANNEAL_ERRORS_HPP
#define NFANNEAL_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nfanneal {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: wrong dimensions, non-finite values, invalid configuration.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A coupling layer produced a non-finite scale or shift.
class NonFiniteError : public Error {
 public:
  NonFiniteError(std::size_t layer, const std::string& what)
      : Error("layer " + std::to_string(layer) + ": " + what), layer_(layer) {}

  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t layer_;
};

/// Importance weights that are all zero (or sum to zero).
class DegenerateWeightsError : public Error {
 public:
  using Error::Error;
};

/// The annealing schedule cannot make progress.
class ScheduleStallError : public Error {
 public:
  using Error::Error;
};

/// Non-finite gradients during optimization.
class TrainingDivergedError : public Error {
 public:
  using Error::Error;
};

/// Fewer than two usable points for thermodynamic integration.
class InsufficientLadderError : public Error {
 public:
  using Error::Error;
};

/// Autocorrelation ESS of a zero-variance chain.
class UndefinedEssError : public Error {
 public:
  using Error::Error;
};

}  // namespace nfanneal

#endif  // NFANNEAL_ERRORS_HPP
