#include "runtime/sources.hpp"

#include "common/error.hpp"
#include "signal/recording.hpp"

#include <algorithm>
#include <thread>

namespace mibci::runtime {

double monotonic_now()
{
    static const Clock::time_point origin = Clock::now();
    return std::chrono::duration<double>(Clock::now() - origin).count();
}

ReplaySource::ReplaySource(signal::Recording recording, double realtime_factor, Eigen::Index chunk_frames)
    : recording_(std::move(recording))
    , montage_(std::make_shared<const signal::Montage>(recording_.montage))
    , factor_(realtime_factor)
    , chunk_frames_(chunk_frames)
{
    require(realtime_factor >= 0 && std::isfinite(realtime_factor), ErrorCode::kParameter,
        "realtime factor must be non-negative");
    require(chunk_frames > 0, ErrorCode::kParameter, "chunk size must be positive");
    std::stable_sort(recording_.markers.begin(), recording_.markers.end(),
        [](const signal::Marker& a, const signal::Marker& b) { return a.timestamp < b.timestamp; });
}

std::optional<SourceChunk> ReplaySource::next()
{
    if (interrupted_ || cursor_ >= recording_.frames())
        return std::nullopt;
    if (!origin_)
        origin_ = Clock::now();

    const Eigen::Index n = std::min(chunk_frames_, recording_.frames() - cursor_);
    const double fs = recording_.montage.sample_rate_hz;
    const double end_s = static_cast<double>(cursor_ + n) / fs;

    SourceChunk out;
    if (factor_ > 0) {
        const auto due = *origin_ + std::chrono::duration_cast<Clock::duration>(
                                        std::chrono::duration<double>(end_s / factor_));
        // Sleep in short slices so interrupt() is honoured promptly.
        while (!interrupted_ && Clock::now() < due)
            std::this_thread::sleep_until(std::min(due, Clock::now() + std::chrono::milliseconds(20)));
        if (interrupted_)
            return std::nullopt;
        out.nominal_ts = std::chrono::duration<double>(due.time_since_epoch()).count();
    }
    out.chunk.samples = recording_.samples.middleCols(cursor_, n);
    out.chunk.start_timestamp = static_cast<double>(cursor_) / fs;
    out.chunk.montage = montage_;
    while (marker_cursor_ < recording_.markers.size()
        && (recording_.markers[marker_cursor_].timestamp < end_s || cursor_ + n >= recording_.frames()))
        out.markers.push_back(recording_.markers[marker_cursor_++]);
    out.seq = seq_++;
    cursor_ += n;
    out.emitted_ts = monotonic_now();
    if (factor_ > 0) {
        // Express the due time on the same monotonic axis as emitted_ts.
        const double lag = std::chrono::duration<double>(Clock::now().time_since_epoch()).count() - out.nominal_ts;
        out.nominal_ts = out.emitted_ts - std::max(0.0, lag);
    } else {
        out.nominal_ts = out.emitted_ts;
    }
    return out;
}

std::unique_ptr<ReplaySource> open_replay(
    const std::filesystem::path& path, double realtime_factor, Eigen::Index chunk_frames)
{
    return std::make_unique<ReplaySource>(signal::load_recording(path), realtime_factor, chunk_frames);
}

} // namespace mibci::runtime
