#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace onebit {

/// Base class for every error raised by the library. The CLI maps
/// ConfigError/InvalidArgument/FormatError/CorruptPayload to exit code 1
/// and NumericError to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent dimensions or hyperparameters detected before any compute.
class ConfigError : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced during a computation. `layer` is the index of the
/// offending network layer when known, `client` the client id when known.
class NumericError : public Error {
public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    explicit NumericError(const std::string& what, std::size_t layer = npos,
                          std::size_t client = npos)
        : Error(what), layer_(layer), client_(client) {}

    std::size_t layer() const noexcept { return layer_; }
    std::size_t client() const noexcept { return client_; }

private:
    std::size_t layer_;
    std::size_t client_;
};

/// Wire payload with the wrong size or illegal bit patterns.
class CorruptPayload : public Error {
public:
    using Error::Error;
};

/// Malformed dataset file; the message carries the byte offset or line number.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace onebit
