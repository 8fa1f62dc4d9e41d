#include "artss/error.hpp"

namespace artss {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedRow: return "MalformedRow";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::NonPositiveSigma: return "NonPositiveSigma";
        case ErrorCode::ZeroVector: return "ZeroVector";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::EmptyPool: return "EmptyPool";
        case ErrorCode::PoolTooSmall: return "PoolTooSmall";
        case ErrorCode::EmptyData: return "EmptyData";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::DegenerateComponent: return "DegenerateComponent";
        case ErrorCode::TooFewFits: return "TooFewFits";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

void fail(ErrorCode code, const std::string& detail) { throw Error(code, detail); }

}  // namespace artss
