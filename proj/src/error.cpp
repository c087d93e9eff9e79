#include "qtrajgeom/error.hpp"

#include <cmath>

#include "qtrajgeom/constants.hpp"

namespace qtrajgeom {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::DegenerateState: return "DegenerateState";
        case ErrorCode::InvalidStrength: return "InvalidStrength";
        case ErrorCode::SingularCoordinate: return "SingularCoordinate";
        case ErrorCode::SingularMeasure: return "SingularMeasure";
        case ErrorCode::EmptyBin: return "EmptyBin";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::SingularJacobian: return "SingularJacobian";
        case ErrorCode::BranchLost: return "BranchLost";
        case ErrorCode::NoBracket: return "NoBracket";
        case ErrorCode::AntipodalEndpoints: return "AntipodalEndpoints";
        case ErrorCode::GridTooCoarse: return "GridTooCoarse";
        case ErrorCode::NonQuantized: return "NonQuantized";
        case ErrorCode::NoFlip: return "NoFlip";
        case ErrorCode::DegenerateClock: return "DegenerateClock";
        case ErrorCode::ConjugatePoint: return "ConjugatePoint";
        case ErrorCode::NotConverged: return "NotConverged";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

double wrap_pi(double angle) {
    double w = std::remainder(angle, kTwoPi);
    if (w <= -kPi) w += kTwoPi;
    return w;
}

}  // namespace qtrajgeom
