#pragma once

#include <stdexcept>
#include <string>

namespace rmbench {

// Error taxonomy. The CLI maps these onto exit codes:
// ConfigError/ContractError -> 1, IoError -> 2, NumericalError -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or dimension disagreement between operands.
struct ShapeError : Error {
  using Error::Error;
};

// Caller violated an operation contract (missing batch role, non-scalar
// objective, bad axis).
struct ContractError : Error {
  using Error::Error;
};

// Invalid or inconsistent configuration values.
struct ConfigError : Error {
  using Error::Error;
};

// Input is mathematically degenerate (near-zero norm under cosine, empty
// reduction axis).
struct DomainError : Error {
  using Error::Error;
};

// Non-finite value produced or consumed where finite math is required.
struct NumericalError : Error {
  using Error::Error;
};

// File IO / serialization failure.
struct IoError : Error {
  using Error::Error;
};

}  // namespace rmbench
