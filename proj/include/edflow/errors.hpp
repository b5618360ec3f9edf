#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace edflow {

// Base of every error raised by the library. Callers that only care about
// "something went wrong numerically" can catch this one type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NonPositiveConformalFactor : public Error {
public:
    explicit NonPositiveConformalFactor(double min_value)
        : Error("conformal factor must be positive (min = " + std::to_string(min_value) + ")"),
          min_value_(min_value) {}
    double min_value() const noexcept { return min_value_; }

private:
    double min_value_;
};

class ConvergenceFailure : public Error {
public:
    ConvergenceFailure(std::string what, std::size_t iterations, double residual)
        : Error(what + ": no convergence after " + std::to_string(iterations) +
                " iterations (residual " + std::to_string(residual) + ")"),
          iterations_(iterations), residual_(residual) {}
    std::size_t iterations() const noexcept { return iterations_; }
    double residual() const noexcept { return residual_; }

private:
    std::size_t iterations_;
    double residual_;
};

class GridTooLarge : public Error {
public:
    using Error::Error;
};

class WindowTooNarrow : public Error {
public:
    using Error::Error;
};

class ZeroEigenvalue : public Error {
public:
    ZeroEigenvalue() : Error("eigenvalue is zero") {}
};

class SmallGap : public Error {
public:
    SmallGap(double gap, double tol)
        : Error("spectral gap " + std::to_string(gap) + " below tolerance " + std::to_string(tol)),
          gap_(gap) {}
    double gap() const noexcept { return gap_; }

private:
    double gap_;
};

class ParameterTooSmall : public Error {
public:
    using Error::Error;
};

class NonPositiveDiffusivity : public Error {
public:
    explicit NonPositiveDiffusivity(double min_value)
        : Error("diffusion coefficient must be positive (min = " + std::to_string(min_value) + ")") {}
};

class PositivityLoss : public Error {
public:
    PositivityLoss(double t, double min_u)
        : Error("conformal factor lost positivity at t = " + std::to_string(t) +
                " (min u = " + std::to_string(min_u) + ")") {}
};

class NoSimpleEigenvalue : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, std::size_t column, const std::string& msg)
        : Error("parse error at " + std::to_string(line) + ":" + std::to_string(column) + ": " + msg),
          line_(line), column_(column) {}
    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_, column_;
};

class ValidationError : public Error {
public:
    ValidationError(std::string key, const std::string& msg)
        : Error("invalid value for '" + key + "': " + msg), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace edflow
