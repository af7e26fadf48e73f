#pragma once

#include <stdexcept>
#include <string>

namespace dsc {

/// Base of every error raised by the library. `error_class()` is the
/// machine-readable tag the CLI prints and maps onto an exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* error_class() const noexcept { return "error"; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    const char* error_class() const noexcept override { return "config"; }
};

/// Raised when a config document fails schema validation.
class SchemaError : public ConfigError {
public:
    using ConfigError::ConfigError;
    const char* error_class() const noexcept override { return "schema"; }
};

class FramingError : public Error {
public:
    using Error::Error;
    const char* error_class() const noexcept override { return "framing"; }
};

class DegenerateInputError : public Error {
public:
    using Error::Error;
    const char* error_class() const noexcept override { return "degenerate-input"; }
};

class ContractViolation : public Error {
public:
    using Error::Error;
    const char* error_class() const noexcept override { return "contract"; }
};

class StageMismatchError : public Error {
public:
    using Error::Error;
    const char* error_class() const noexcept override { return "stage-mismatch"; }
};

class DivergenceError : public Error {
public:
    using Error::Error;
    const char* error_class() const noexcept override { return "divergence"; }
};

class IncompleteGridError : public Error {
public:
    using Error::Error;
    const char* error_class() const noexcept override { return "incomplete-grid"; }
};

class MissingFileError : public Error {
public:
    using Error::Error;
    const char* error_class() const noexcept override { return "missing-file"; }
};

class FormatError : public Error {
public:
    using Error::Error;
    const char* error_class() const noexcept override { return "format"; }
};

}  // namespace dsc
