#pragma once

#include "signal/types.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>

namespace mibci::runtime {

using Clock = std::chrono::steady_clock;

/// Monotonic seconds since an arbitrary process-wide origin.
double monotonic_now();

struct SourceChunk {
    signal::SampleChunk chunk;
    std::vector<signal::Marker> markers; // stream-time markers inside this chunk
    std::uint64_t seq = 0;
    double nominal_ts = 0.0;  // monotonic time the newest sample is due
    double emitted_ts = 0.0;  // monotonic time the chunk was handed out
};

class StreamSource {
public:
    virtual ~StreamSource() = default;

    virtual const signal::Montage& montage() const = 0;
    /// Blocks until the next chunk is due. Returns nothing once the stream is
    /// exhausted or `interrupt()` was called.
    virtual std::optional<SourceChunk> next() = 0;
    virtual void interrupt() = 0;
};

// Replays a recording in fixed-size chunks. A realtime factor f paces chunk k
// to be emitted (k+1) * chunk_duration / f after the first call; f = 0 emits
// as fast as the consumer pulls.
class ReplaySource final : public StreamSource {
public:
    ReplaySource(signal::Recording recording, double realtime_factor, Eigen::Index chunk_frames = 25);

    const signal::Montage& montage() const override { return recording_.montage; }
    std::optional<SourceChunk> next() override;
    void interrupt() override { interrupted_ = true; }

    const signal::Recording& recording() const noexcept { return recording_; }
    double realtime_factor() const noexcept { return factor_; }

private:
    signal::Recording recording_;
    std::shared_ptr<const signal::Montage> montage_;
    double factor_;
    Eigen::Index chunk_frames_;
    Eigen::Index cursor_ = 0;
    std::size_t marker_cursor_ = 0;
    std::uint64_t seq_ = 0;
    std::optional<Clock::time_point> origin_;
    std::atomic<bool> interrupted_ {false};
};

std::unique_ptr<ReplaySource> open_replay(
    const std::filesystem::path& path, double realtime_factor, Eigen::Index chunk_frames = 25);

} // namespace mibci::runtime
