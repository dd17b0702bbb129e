#pragma once

#include <stdexcept>
#include <string>

namespace nexus {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Tensor extents do not line up (mismatched shapes, invalid extents).
struct ShapeError : Error {
    using Error::Error;
};

/// A scalar argument is outside its valid range.
struct ParamError : Error {
    using Error::Error;
};

/// An operation was called in the wrong order (e.g. backward before forward).
struct StateError : Error {
    using Error::Error;
};

/// A coordinate lies outside the addressed volume.
struct BoundsError : Error {
    using Error::Error;
};

/// File could not be read/written or has a malformed payload.
struct IoError : Error {
    using Error::Error;
};

/// Persisted data does not match the expected format version or model digest.
struct VersionError : Error {
    using Error::Error;
};

/// Invalid run configuration (missing labels, bad key=value file, ...).
struct ConfigError : Error {
    using Error::Error;
};

/// Training produced a non-finite loss.
struct NumericError : Error {
    using Error::Error;
};

} // namespace nexus
