// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace snelsd {

// Base class for all workbench errors. Every subclass carries a single-line
// message suitable for machine parsing on the CLI surface.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes do not conform (the message names both shapes).
struct DimensionError : Error {
  using Error::Error;
};

// A documented precondition was violated (r outside [0,1], non-scalar loss, ...).
struct ContractError : Error {
  using Error::Error;
};

// An operation that needs at least one valid element got none.
struct EmptySequenceError : Error {
  using Error::Error;
};

// Malformed input file; carries the 1-based line number.
struct ParseError : Error {
  ParseError(const std::string& msg, long line)
      : Error(msg + " (line " + std::to_string(line) + ")"), line(line) {}
  long line;
};

// Well-formed input with invalid content (unknown label, bad class index).
struct DataError : Error {
  using Error::Error;
};

// A parse tree violates the binary-tree contract.
struct MalformedTreeError : Error {
  using Error::Error;
};

// Invalid run configuration; raised before any training work starts.
struct ConfigError : Error {
  using Error::Error;
};

// A checkpoint cannot serve the requested operation.
struct CapabilityError : Error {
  using Error::Error;
};

}  // namespace snelsd
