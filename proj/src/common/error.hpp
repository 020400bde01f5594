#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mibci {

enum class ErrorCode {
    kParameter = 1,
    kShape,
    kDesign,
    kLength,
    kDataQuality,
    kCalibration,
    kData,
    kFit,
    kNumeric,
    kTraining,
    kParse,
    kVersion,
    kConfig,
    kIo,
    kTimeout,
    kStartup,
    kReport,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message)
{
    if (!condition)
        fail(code, message);
}

} // namespace mibci
