#include "sessions/paradigm.hpp"

#include "common/error.hpp"
#include "signal/recording.hpp"

#include <algorithm>

namespace mibci::sessions {

namespace {

struct Stamp {
    signal::Marker marker;
    bool is_cue = false;
};

signal::Recording stream_with_markers(std::vector<Stamp> stamps, double duration_s,
    runtime::StreamSource& source, const ParadigmOptions& options, double cue_s)
{
    std::stable_sort(stamps.begin(), stamps.end(),
        [](const Stamp& a, const Stamp& b) { return a.marker.timestamp < b.marker.timestamp; });
    const signal::Montage& montage = source.montage();
    const double fs = montage.sample_rate_hz;
    const auto needed = static_cast<Eigen::Index>(std::llround(duration_s * fs));

    signal::Recording rec;
    rec.montage = montage;
    rec.session_id = options.session_id;
    std::vector<Eigen::MatrixXd> chunks;
    Eigen::Index have = 0;
    std::size_t next_stamp = 0;

    auto assemble = [&] {
        rec.samples.resize(static_cast<Eigen::Index>(montage.channel_count()), std::min(have, needed));
        Eigen::Index col = 0;
        for (const auto& c : chunks) {
            const Eigen::Index take = std::min(c.cols(), rec.samples.cols() - col);
            rec.samples.middleCols(col, take) = c.leftCols(take);
            col += take;
        }
    };

    while (have < needed) {
        const auto asked = runtime::Clock::now();
        auto chunk = source.next();
        const auto waited = runtime::Clock::now() - asked;
        if (!chunk || waited > options.timeout) {
            if (chunk) {
                chunks.push_back(std::move(chunk->chunk.samples));
                have += chunks.back().cols();
            }
            assemble();
            if (!options.output.empty())
                signal::save_recording(rec, options.output);
            fail(ErrorCode::kTimeout,
                "source starved after " + std::to_string(static_cast<double>(rec.frames()) / fs)
                    + " s of " + std::to_string(duration_s) + " s; partial recording kept"
                    + (options.output.empty() ? std::string() : " at " + options.output.string()));
        }
        require(chunk->chunk.samples.rows() == static_cast<Eigen::Index>(montage.channel_count()),
            ErrorCode::kShape, "source chunk does not match its montage");
        have += chunk->chunk.samples.cols();
        chunks.push_back(std::move(chunk->chunk.samples));
        const double covered = static_cast<double>(have) / fs;
        while (next_stamp < stamps.size() && stamps[next_stamp].marker.timestamp < covered) {
            const Stamp& s = stamps[next_stamp++];
            rec.markers.push_back(s.marker);
            if (s.is_cue && options.on_cue)
                options.on_cue(s.marker.label, static_cast<int>(std::lround(cue_s * 1000.0)));
        }
    }
    for (; next_stamp < stamps.size(); ++next_stamp)
        rec.markers.push_back(stamps[next_stamp].marker);
    assemble();
    if (!options.output.empty())
        signal::save_recording(rec, options.output);
    return rec;
}

} // namespace

signal::Recording run_paradigm(
    const CueSchedule& schedule, runtime::StreamSource& source, const ParadigmOptions& options)
{
    require(!schedule.cues.empty(), ErrorCode::kParameter, "cue schedule is empty");
    std::vector<Stamp> stamps;
    for (const auto& m : schedule.markers()) {
        const bool cue = std::any_of(schedule.cues.begin(), schedule.cues.end(),
            [&](const Cue& c) { return c.cls == m.label && c.onset_s == m.timestamp; });
        stamps.push_back({m, cue});
    }
    return stream_with_markers(std::move(stamps), schedule.duration_s(), source, options, schedule.phases.cue_s);
}

signal::Recording run_calibration(
    const CalibrationPlan& plan, runtime::StreamSource& source, const ParadigmOptions& options)
{
    require(plan.calibration_s > 0 && plan.lead_s >= 0 && plan.tail_s >= 0, ErrorCode::kParameter,
        "calibration durations must be positive");
    std::vector<Stamp> stamps {{{plan.lead_s, "calibration_start"}, false},
        {{plan.lead_s + plan.calibration_s, "calibration_end"}, false}};
    return stream_with_markers(
        std::move(stamps), plan.lead_s + plan.calibration_s + plan.tail_s, source, options, 0.0);
}

} // namespace mibci::sessions
