#pragma once

#include <stdexcept>
#include <string>

namespace ccconv {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand shapes are incompatible (messages carry both shapes).
struct ShapeError : Error {
  using Error::Error;
};

// Invalid scale/layer specification or execution-mode mismatch.
struct SpecError : Error {
  using Error::Error;
};

// Backward requested for a tensor the tape never produced, or similar misuse.
struct TapeError : Error {
  using Error::Error;
};

// NaN/Inf where finite values are required.
struct NumericError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace ccconv
