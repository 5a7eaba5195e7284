#include "depcop/error.hpp"

namespace depcop {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidData: return "InvalidData";
        case ErrorKind::DegenerateColumn: return "DegenerateColumn";
        case ErrorKind::InvalidParameter: return "InvalidParameter";
        case ErrorKind::InfeasibleProjection: return "InfeasibleProjection";
        case ErrorKind::ConvergenceFailure: return "ConvergenceFailure";
        case ErrorKind::UnderflowDetected: return "UnderflowDetected";
        case ErrorKind::OracleTooLarge: return "OracleTooLarge";
        case ErrorKind::AmbiguousSpec: return "AmbiguousSpec";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

ConvergenceFailure::ConvergenceFailure(const std::string& message, double last_value,
                                       double residual)
    : Error(ErrorKind::ConvergenceFailure, message),
      last_value_(last_value),
      residual_(residual) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace depcop
