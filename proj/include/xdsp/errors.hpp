#ifndef XDSP_ERRORS_HPP
#define XDSP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace xdsp {

// Base class for all recoverable errors raised by the library. The CLI maps
// these to exit code 1; anything else escaping a command is a bug.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  using Error::Error;
};
struct ContractError : Error {
  using Error::Error;
};
// Numeric overflow/NaN surfaced by a finiteness guard.
struct NonFiniteError : ContractError {
  using ContractError::ContractError;
};
struct ValueDomainError : Error {
  using Error::Error;
};
struct DeterminismError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct ConsistencyError : Error {
  using Error::Error;
};
struct DegenerateDataError : Error {
  using Error::Error;
};
struct InsufficientDataError : Error {
  using Error::Error;
};
struct VocabularyError : Error {
  using Error::Error;
};
struct RangeError : Error {
  using Error::Error;
};
struct DivergenceError : Error {
  using Error::Error;
};
struct FormatError : Error {
  using Error::Error;
};
struct VersionError : Error {
  using Error::Error;
};
struct IncompatibilityError : Error {
  using Error::Error;
};
struct PairingError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

}  // namespace xdsp

#endif
