#pragma once

#include <stdexcept>
#include <string>

namespace sat {

// Base class for every error the engine reports. The CLI maps the concrete
// subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad caller-supplied arguments (unknown arch, non-positive delay, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Unreadable, unsupported or too-short audio.
class AudioError : public Error {
public:
    using Error::Error;
};

// Weight files and tensor shapes.
class WeightError : public Error {
public:
    using Error::Error;
};

// Shape or numeric precondition violated inside the model.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Feature not compiled into this binary.
class UnsupportedError : public Error {
public:
    using Error::Error;
};

} // namespace sat
