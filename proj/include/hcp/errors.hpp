#pragma once

#include <stdexcept>
#include <string>

namespace hcp {

// Library-wide error taxonomy. The CLI maps these onto exit codes
// (validation-family -> 2, compatibility -> 3, numerical -> 4).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user input, bad configuration values, out-of-range arguments.
struct ValidationError : Error {
    using Error::Error;
};

// Mismatched tensor/matrix dimensions; messages name both operands.
struct ShapeError : ValidationError {
    using ValidationError::ValidationError;
};

// Structural misconfiguration: unknown layer ids, zero projection dims, ...
struct ConfigError : ValidationError {
    using ValidationError::ValidationError;
};

// Operation invoked on an object that is not in a usable state.
struct StateError : Error {
    using Error::Error;
};

// Inputs that are formally valid but numerically degenerate (zero norms).
struct DegenerateInputError : Error {
    using Error::Error;
};

// A pluggable component violated its contract (e.g. wrong stage sizes).
struct ContractError : Error {
    using Error::Error;
};

// Checkpoint/backbone descriptor mismatch; message carries the report.
struct CompatibilityError : Error {
    using Error::Error;
};

// Numerical failure beyond tolerance (e.g. covariance square root).
struct NumericalError : Error {
    using Error::Error;
};

// A frozen parameter block changed during training.
struct FreezeViolationError : Error {
    using Error::Error;
};

}  // namespace hcp
