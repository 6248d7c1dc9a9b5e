#pragma once

#include <stdexcept>
#include <string>

namespace featscope {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An input violates a documented invariant (non-finite values, bad config, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Operand shapes disagree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A persisted artifact is malformed or truncated.
class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// A numerical routine could not produce a meaningful answer (degenerate input).
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace featscope
