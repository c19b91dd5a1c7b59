// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ether {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape disagreement between operands; message names both shapes.
struct DimensionError : Error {
    using Error::Error;
};

// A vector whose norm is below the normalization guard.
struct DegenerateVectorError : Error {
    using Error::Error;
};

// Invalid run configuration (block counts, ranks, unknown keys, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Numerical failure (singular solve, non-finite intermediate).
struct NumericError : Error {
    using Error::Error;
};

// API contract violation (e.g. backward on a non-scalar).
struct ContractError : Error {
    using Error::Error;
};

// Malformed serialized data; carries the byte offset of the defect.
struct FormatError : Error {
    std::size_t offset;
    FormatError(const std::string& msg, std::size_t byte_offset)
        : Error(msg + " (at byte " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
};

struct IoError : Error {
    using Error::Error;
};

// Harness setup failure (e.g. pretraining did not reach its threshold).
struct SetupError : Error {
    using Error::Error;
};

} // namespace ether
