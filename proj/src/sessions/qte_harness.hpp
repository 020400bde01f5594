#pragma once

#include "runtime/transfer.hpp"
#include "signal/types.hpp"

#include <nlohmann/json.hpp>
#include <functional>
#include <mutex>

namespace mibci::sessions {

struct QteConfig {
    double duration_s = 3.0;
    double delta_up = 0.2;
    double delta_down = 0.1;
    /// Markers "<prefix><class>" open a quick-time event for that class.
    std::string marker_prefix = "task:";
};

struct QteTrial {
    std::string cls;
    double start_s = 0.0;
    double bar = 0.0;
    bool resolved = false;
    bool success = false;
    double outcome_s = 0.0;
};

// Scripted stand-in for the quick-time game. Each event lasts duration_s from
// its opening marker. A frame whose label equals the cued class and whose
// smoothed probability reaches that class's threshold raises the bar by
// delta_up; any other frame lowers it by delta_down. A full bar before the
// deadline is a success.
class QteHarness {
public:
    /// event is "qte_start:<class>", "jump" or "fail"; ts is stream time.
    using EventSink = std::function<void(const std::string& event, double ts)>;

    explicit QteHarness(QteConfig config = {}, EventSink sink = {});

    void on_marker(const signal::Marker& marker);
    void on_frame(const runtime::ControlFrame& frame, const runtime::TransferConfig& transfer);
    /// Fails every event still open at stream time `ts`.
    void finish(double ts);

    std::vector<QteTrial> trials() const;
    std::size_t successes() const;
    double success_rate() const;
    /// Attempts and successes per class plus the overall rate.
    nlohmann::json to_json() const;
    std::string table() const;

private:
    void resolve(QteTrial& trial, bool success, double ts);

    QteConfig config_;
    EventSink sink_;
    mutable std::mutex mutex_;
    std::vector<QteTrial> trials_;
    std::size_t next_open_ = 0;
};

} // namespace mibci::sessions
