#pragma once

#include <stdexcept>
#include <string>

namespace splatctl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid scenario, controller or moment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// File could not be read or written; the message carries the path.
class IoError : public Error {
public:
    using Error::Error;
};

/// Per-primitive sequences that should be aligned have different lengths.
class AlignmentError : public Error {
public:
    using Error::Error;
};

/// A gradient with a NaN or infinite component was offered to a moment update.
class PoisonedGradientError : public Error {
public:
    using Error::Error;
};

/// Bias correction was requested for a state that has never been updated.
class UndefinedCorrectionError : public Error {
public:
    using Error::Error;
};

/// Malformed snapshot, PGM, scenario or trace input.
class FormatError : public Error {
public:
    using Error::Error;
};

/// The loss became non-finite during a run.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace splatctl
