#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace smahp {

enum class ErrorCode {
    // data / input errors
    ShapeMismatch,
    NonFinite,
    AllCensored,
    MissingColumn,
    NonPositiveTime,
    BadStatusValue,
    DuplicateId,
    JoinMismatch,
    IoError,
    // caller / contract errors
    DimensionMismatch,
    InvalidPenalty,
    InvalidTau,
    OutOfRange,
    NonPositiveSE,
    InvalidScenario,
    TooManyPairs,
    InvalidConfig,
    AllCensoredFold,
    // numerical failures
    NoConvergence,
    SingularInformation,
    InsufficientEvents,
    RankDeficientDesign,
    CalibrationFailure,
};

enum class ErrorCategory { Data, Usage, Numerical };

inline constexpr std::string_view to_string(ErrorCode c) noexcept
{
    switch (c) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::AllCensored: return "AllCensored";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonPositiveTime: return "NonPositiveTime";
    case ErrorCode::BadStatusValue: return "BadStatusValue";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::JoinMismatch: return "JoinMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidPenalty: return "InvalidPenalty";
    case ErrorCode::InvalidTau: return "InvalidTau";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::NonPositiveSE: return "NonPositiveSE";
    case ErrorCode::InvalidScenario: return "InvalidScenario";
    case ErrorCode::TooManyPairs: return "TooManyPairs";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::AllCensoredFold: return "AllCensoredFold";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::SingularInformation: return "SingularInformation";
    case ErrorCode::InsufficientEvents: return "InsufficientEvents";
    case ErrorCode::RankDeficientDesign: return "RankDeficientDesign";
    case ErrorCode::CalibrationFailure: return "CalibrationFailure";
    }
    return "Unknown";
}

inline constexpr ErrorCategory category_of(ErrorCode c) noexcept
{
    switch (c) {
    case ErrorCode::ShapeMismatch:
    case ErrorCode::NonFinite:
    case ErrorCode::AllCensored:
    case ErrorCode::MissingColumn:
    case ErrorCode::NonPositiveTime:
    case ErrorCode::BadStatusValue:
    case ErrorCode::DuplicateId:
    case ErrorCode::JoinMismatch:
    case ErrorCode::IoError:
        return ErrorCategory::Data;
    case ErrorCode::NoConvergence:
    case ErrorCode::SingularInformation:
    case ErrorCode::InsufficientEvents:
    case ErrorCode::RankDeficientDesign:
    case ErrorCode::CalibrationFailure:
        return ErrorCategory::Numerical;
    default:
        return ErrorCategory::Usage;
    }
}

/// Single exception type carrying a machine-readable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what)
        , code_(code)
    {}

    ErrorCode code() const noexcept { return code_; }
    ErrorCategory category() const noexcept { return category_of(code_); }

private:
    ErrorCode code_;
};

} // namespace smahp
