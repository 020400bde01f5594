#pragma once

#include "runtime/sources.hpp"
#include "sessions/cue_schedule.hpp"

#include <chrono>
#include <filesystem>
#include <functional>

namespace mibci::sessions {

struct ParadigmOptions {
    /// Longest wait for the next chunk before the source counts as starved.
    std::chrono::milliseconds timeout {2000};
    /// Receives (class, duration_ms) at every cue onset, e.g. to forward it to the console.
    std::function<void(const std::string&, int)> on_cue;
    /// Recording sink; the partial recording is written here when the source starves.
    std::filesystem::path output;
    std::string session_id = "session";
};

struct CalibrationPlan {
    double calibration_s = 60.0;
    double lead_s = 5.0;
    double tail_s = 2.0;
};

// Streams the source into a recording and stamps schedule markers in stream
// time as the samples covering them arrive. Throws kTimeout when the source
// starves before the schedule ends.
signal::Recording run_paradigm(
    const CueSchedule& schedule, runtime::StreamSource& source, const ParadigmOptions& options);

/// Calibration mode: one calibration_start/calibration_end pair around `calibration_s`.
signal::Recording run_calibration(
    const CalibrationPlan& plan, runtime::StreamSource& source, const ParadigmOptions& options);

} // namespace mibci::sessions
