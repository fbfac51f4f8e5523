#pragma once

#include <stdexcept>
#include <string>

namespace aa {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A configuration value is out of its admissible range.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Input data is unusable (non-finite entries, empty classes, ...).
class DataError : public Error {
public:
    using Error::Error;
};

/// A file does not follow the expected on-disk layout.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Delimited text could not be parsed; carries the offending 1-based line.
class ParseError : public FormatError {
public:
    ParseError(const std::string& what, std::size_t line)
        : FormatError(what + " (line " + std::to_string(line) + ")"), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Reading or writing a path failed.
class IoError : public Error {
public:
    using Error::Error;
};

/// A numerical routine could not produce a usable result.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace aa
