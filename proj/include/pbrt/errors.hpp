#pragma once

#include <stdexcept>
#include <string>

namespace pbrt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A factorization pivot fell below the positive-definiteness threshold.
class NotPositiveDefinite : public Error {
public:
    using Error::Error;
};

/// A covariance that must be PSD has a clearly negative eigenvalue.
class NotPositiveSemidefinite : public Error {
public:
    using Error::Error;
};

class UnknownStimulus : public Error {
public:
    using Error::Error;
};

/// An observation violates headway/BRT bounds.
class InvalidObservation : public Error {
public:
    using Error::Error;
};

class DriverMismatch : public Error {
public:
    using Error::Error;
};

class InvalidQuantile : public Error {
public:
    using Error::Error;
};

/// Bad configuration or malformed input file contents.
class InvalidInput : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace pbrt
