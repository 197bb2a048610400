#pragma once

#include <stdexcept>
#include <string>

namespace forge {

// Base class for every failure raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input violates a documented precondition (bad breaks, bad ratio, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

// A named variable, column or stage does not exist.
class NotFound : public Error {
public:
    using Error::Error;
};

// A pipeline stage was requested before its prerequisite ran.
class StageError : public Error {
public:
    using Error::Error;
};

} // namespace forge
