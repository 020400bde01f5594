#include "common/error.hpp"

namespace mibci {

std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::kParameter: return "parameter error";
    case ErrorCode::kShape: return "shape error";
    case ErrorCode::kDesign: return "design error";
    case ErrorCode::kLength: return "length error";
    case ErrorCode::kDataQuality: return "data-quality error";
    case ErrorCode::kCalibration: return "calibration error";
    case ErrorCode::kData: return "data error";
    case ErrorCode::kFit: return "fit error";
    case ErrorCode::kNumeric: return "numeric error";
    case ErrorCode::kTraining: return "training error";
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kVersion: return "version error";
    case ErrorCode::kConfig: return "config error";
    case ErrorCode::kIo: return "io error";
    case ErrorCode::kTimeout: return "timeout error";
    case ErrorCode::kStartup: return "startup error";
    case ErrorCode::kReport: return "report error";
    }
    return "unknown error";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message)
    , code_(code)
{
}

void fail(ErrorCode code, const std::string& message)
{
    throw Error(code, message);
}

} // namespace mibci
