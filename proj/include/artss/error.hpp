#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace artss {

enum class ErrorCode {
    MalformedRow,
    DimensionMismatch,
    NonPositiveSigma,
    ZeroVector,
    DuplicateId,
    EmptyPool,
    PoolTooSmall,
    EmptyData,
    NonFiniteLoss,
    DegenerateComponent,
    TooFewFits,
    InvalidArgument,
    Io,
};

const char* to_string(ErrorCode code);

// Every failure raised by the library carries a code so callers (the CLI in
// particular) can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail);

    ErrorCode code() const noexcept { return code_; }

    // Exit-status class: numerical failures vs. input/usage failures.
    bool is_numerical() const noexcept {
        return code_ == ErrorCode::NonFiniteLoss || code_ == ErrorCode::DegenerateComponent;
    }

private:
    ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& detail);

inline std::string line_detail(std::size_t line, const std::string& what) {
    return "line " + std::to_string(line) + ": " + what;
}

}  // namespace artss
