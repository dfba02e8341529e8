#pragma once

#include <stdexcept>
#include <string>

namespace kinegen {

/// Base for every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration value or range (synthesis ranges, presets, degenerate stats).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Invalid call argument (counts, step sizes, empty inputs).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Array or sequence dimensions disagree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents. Messages carry line or record context.
class ParseError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss or parameter encountered during training.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Profile whose integral vanishes and therefore cannot be rescaled onto a path.
class DegenerateProfileError : public Error {
public:
    using Error::Error;
};

/// Correlation requested for a constant series.
class UndefinedCorrelationError : public Error {
public:
    using Error::Error;
};

}  // namespace kinegen
