#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace depcop {

enum class ErrorKind {
    InvalidData,
    DegenerateColumn,
    InvalidParameter,
    InfeasibleProjection,
    ConvergenceFailure,
    UnderflowDetected,
    OracleTooLarge,
    AmbiguousSpec,
    ParseError,
    IoError,
};

std::string_view to_string(ErrorKind kind);

/// Base exception for everything the library reports. The kind decides the
/// CLI exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Iterative solver hit its iteration cap. Carries the last objective value
/// (NaN when the solver has none) and the worst marginal residual.
class ConvergenceFailure : public Error {
public:
    ConvergenceFailure(const std::string& message, double last_value, double residual);

    double last_value() const noexcept { return last_value_; }
    double residual() const noexcept { return residual_; }

private:
    double last_value_;
    double residual_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace depcop
