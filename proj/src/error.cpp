#include "affordkit/error.hpp"

namespace affordkit {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::AllZeroField: return "AllZeroField";
        case ErrorCode::NegativeValue: return "NegativeValue";
        case ErrorCode::ZeroVariance: return "ZeroVariance";
        case ErrorCode::FieldTooSmall: return "FieldTooSmall";
        case ErrorCode::EmptyRegion: return "EmptyRegion";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::MalformedHeader: return "MalformedHeader";
        case ErrorCode::MalformedValue: return "MalformedValue";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::DegenerateMask: return "DegenerateMask";
        case ErrorCode::TimeOutOfRange: return "TimeOutOfRange";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::NonFiniteState: return "NonFiniteState";
        case ErrorCode::EmptyFixationSet: return "EmptyFixationSet";
        case ErrorCode::MissingPair: return "MissingPair";
        case ErrorCode::PlacementFailure: return "PlacementFailure";
        case ErrorCode::UnknownCategory: return "UnknownCategory";
        case ErrorCode::OracleUnavailable: return "OracleUnavailable";
        case ErrorCode::InconsistentAttributes: return "InconsistentAttributes";
        case ErrorCode::AlreadyDecided: return "AlreadyDecided";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace affordkit
