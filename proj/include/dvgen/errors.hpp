#pragma once

#include <stdexcept>
#include <string>

namespace dvgen {

/// Shape disagreement between operands (matrix dims, vector lengths, ...).
struct DimensionMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Cholesky failed even after the jitter schedule was exhausted.
struct NotPositiveDefinite : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A loss, gradient entry or intermediate value became NaN/Inf.
struct NonFiniteValue : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Precondition violated by the caller (bad step count, empty dataset, ...).
struct InvalidArgument : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Frame with (near-)zero total intensity where a blob was expected.
struct EmptyFrame : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Frame smaller than the metric's window.
struct FrameTooSmall : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed or invalid run configuration. CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Missing/corrupt dataset, trace or checkpoint content. CLI exit code 3.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Filesystem failure (open/write/rename). CLI exit code 3.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace dvgen
