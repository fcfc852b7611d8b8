#pragma once

#include <stdexcept>
#include <string>

namespace pcgkit {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration: bad parameter ranges, missing channels, bad flags.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Problems with input data (files, recordings, batches).
class DataError : public Error {
public:
    using Error::Error;
};

class FormatError : public DataError {
public:
    using DataError::DataError;
};

class UnsupportedError : public DataError {
public:
    using DataError::DataError;
};

/// Inputs that cannot be combined (sample rate, channel set, domain length, shape).
class IncompatibleError : public DataError {
public:
    using DataError::DataError;
};

/// Input too short or degenerate for the requested computation.
class DegenerateInputError : public DataError {
public:
    using DataError::DataError;
};

/// A caller-side contract was broken (e.g. a contrastive batch without positives).
class ContractError : public Error {
public:
    using Error::Error;
};

/// An internal invariant failed. Indicates a bug, not bad input.
class InvariantError : public Error {
public:
    using Error::Error;
};

} // namespace pcgkit
