#ifndef TRANSLOCK_ERROR_HPP
#define TRANSLOCK_ERROR_HPP

#include <stdexcept>
#include <string>

namespace translock {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A model or configuration violates one of its invariants.
class InvalidModel : public Error {
public:
    using Error::Error;
};

// An argument lies outside the domain where a formula is defined.
class DomainError : public Error {
public:
    using Error::Error;
};

// An actuator command exceeds its physical range.
class ActuatorSaturation : public Error {
public:
    using Error::Error;
};

// A frequency gauge could not be established.
class GaugeError : public Error {
public:
    using Error::Error;
};

// Integration step too large for the plant being integrated.
class StepSizeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// A data file (CSV, JSON) is malformed.
class FormatError : public Error {
public:
    using Error::Error;
};

class InitializationError : public Error {
public:
    using Error::Error;
};

// Steady state is not unique; message names the decoupled subspace.
class MultiplicityError : public Error {
public:
    MultiplicityError(const std::string& what, int kernel_dimension)
        : Error(what), kernel_dimension_(kernel_dimension) {}
    int kernel_dimension() const noexcept { return kernel_dimension_; }

private:
    int kernel_dimension_;
};

class FitError : public Error {
public:
    using Error::Error;
};

}  // namespace translock

#endif  // TRANSLOCK_ERROR_HPP
