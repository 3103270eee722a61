#pragma once

#include <stdexcept>
#include <string>

namespace verlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration (render config too narrow, bad CLI parameter, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Offsets, boxes or indices outside their valid domain.
class RangeError : public Error {
public:
    using Error::Error;
};

/// Mismatched tensor / matrix / grid dimensions.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Input that violates a precondition of an operation (empty text, bad distribution, ...).
class InputError : public Error {
public:
    using Error::Error;
};

/// rho == 0: the normalized score R / rho is undefined.
class NormalizationError : public Error {
public:
    using Error::Error;
};

/// All head scores equal: the midpoint threshold separates nothing.
class DegenerateThresholdError : public Error {
public:
    using Error::Error;
};

/// Schema violation in a JSON document or binary header. The message carries a field path.
class FormatError : public Error {
public:
    using Error::Error;
};

class UnsupportedVersionError : public FormatError {
public:
    using FormatError::FormatError;
};

/// Binary payload shorter (or longer) than its header declares.
class TruncationError : public FormatError {
public:
    using FormatError::FormatError;
};

class NonFiniteError : public FormatError {
public:
    using FormatError::FormatError;
};

/// A requested step has no dump in the run directory.
class MissingStepError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace verlab
