#pragma once

#include <stdexcept>
#include <string>

namespace geomech {

/// Base class of every error thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Bad arguments: dimension mismatches, non-finite values, unknown names.
class InvalidInputError : public Error {
public:
    using Error::Error;
};

/// Invalid or incomplete system/run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Config text could not be parsed; carries the offending line number.
class ParseError : public Error {
public:
    ParseError(const std::string& what, int line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

/// An iterative solve stopped before reaching its tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// Singular boundary-value Jacobian: the endpoints are conjugate.
class ConjugatePointError : public Error {
public:
    using Error::Error;
};

/// Floating-point breakdown (singular matrix, non-finite intermediate).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// The requested scheme does not apply to this system.
class UnsupportedMethodError : public Error {
public:
    using Error::Error;
};

} // namespace geomech
