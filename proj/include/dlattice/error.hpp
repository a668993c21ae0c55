#pragma once

#include <stdexcept>
#include <string>

namespace dlattice {

/// Base class of everything this library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or out-of-range run configuration. `path` is a JSON-pointer-like
/// location ("/params/alpha") of the offending field.
class ConfigError : public Error {
public:
    ConfigError(std::string path, std::string reason)
        : Error(path + ": " + reason), path_(std::move(path)), reason_(std::move(reason)) {}

    const std::string& path() const noexcept { return path_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::string path_;
    std::string reason_;
};

/// Input outside the domain where a formula or operation is defined
/// (poles, regime restrictions, dimension mismatches).
class DomainError : public Error {
public:
    using Error::Error;
};

/// An iterative method failed to converge, or a simulation produced non-finite values.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Unreadable or unsupported file content (PGM, CSV, raw frames).
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace dlattice
