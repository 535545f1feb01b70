#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sz {

// Error categories thrown by the library.  The CLI maps each one onto a
// one-line "error: <category>: <message>" diagnostic and a nonzero exit code.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor extents disagree (wrong channel count, window larger than input, ...).
struct DimensionError : Error {
  using Error::Error;
};

// A scalar argument is out of its valid range.
struct ParameterError : Error {
  using Error::Error;
};

// Malformed text in a spec or config file; message carries the line number.
struct ParseError : Error {
  using Error::Error;
};

// Structurally invalid network (unknown predecessor, channel mismatch, ...).
struct SemanticError : Error {
  using Error::Error;
};

// Invalid payload data (unknown palette color, non-finite raster value, ...).
struct DataError : Error {
  using Error::Error;
};

// An operation was invoked without the state it needs (e.g. missing cache).
struct StateError : Error {
  using Error::Error;
};

}  // namespace sz
