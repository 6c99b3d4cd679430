#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace affordkit {

enum class ErrorCode {
    InvalidArgument,
    AllZeroField,
    NegativeValue,
    ZeroVariance,
    FieldTooSmall,
    EmptyRegion,
    DimensionMismatch,
    MalformedHeader,
    MalformedValue,
    NonFiniteValue,
    DegenerateMask,
    TimeOutOfRange,
    NonFiniteLoss,
    NonFiniteState,
    EmptyFixationSet,
    MissingPair,
    PlacementFailure,
    UnknownCategory,
    OracleUnavailable,
    InconsistentAttributes,
    AlreadyDecided,
    Io,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so
// callers (and the CLI exit-code mapping) can branch without parsing text.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace affordkit
