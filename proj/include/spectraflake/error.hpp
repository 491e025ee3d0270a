#pragma once

#include <stdexcept>
#include <string>

namespace spectraflake {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or missing header fields, bad magic numbers.
class ParseError : public Error {
public:
    using Error::Error;
};

// Raw payload does not match the declared dimensions.
class SizeError : public Error {
public:
    using Error::Error;
};

// Precondition violations: dimension mismatches, degenerate inputs.
class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Mask or label value outside the class catalog.
class ClassRangeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Truncated binary file.
class TruncationError : public ParseError {
public:
    using ParseError::ParseError;
};

// Training diverged.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace spectraflake
