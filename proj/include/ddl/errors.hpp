#pragma once

#include <stdexcept>
#include <string>

namespace ddl {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension or shape contract violated (names both shapes in the message).
struct ShapeError : Error {
    using Error::Error;
};

// Invalid or inconsistent configuration, rejected before any computation.
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem trouble: missing files, unwritable paths.
struct IoError : Error {
    using Error::Error;
};

// Structurally invalid file content: bad magic, truncated payload, non-finite floats.
struct ParseError : Error {
    using Error::Error;
};

// Metric undefined on the given pool (e.g. a single-class label set).
struct MetricError : Error {
    using Error::Error;
};

// Gradient tape misuse: backward on a non-scalar, or a second backward pass.
struct TapeError : Error {
    using Error::Error;
};

// A gradient came back NaN/Inf; the optimizer step was rejected.
struct NonFiniteError : Error {
    using Error::Error;
};

}  // namespace ddl
