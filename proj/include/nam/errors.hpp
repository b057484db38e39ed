#pragma once

#include <stdexcept>
#include <string>

namespace nam {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform to what an operation requires.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A NaN or infinity appeared in a value or gradient.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated file, or a file that does not fit the receiving object.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace nam
