#include "sessions/qte_harness.hpp"

#include <cstdio>
#include <map>

namespace mibci::sessions {

QteHarness::QteHarness(QteConfig config, EventSink sink) : config_(std::move(config)), sink_(std::move(sink)) {}

void QteHarness::resolve(QteTrial& trial, bool success, double ts)
{
    trial.resolved = true;
    trial.success = success;
    trial.outcome_s = ts;
    if (sink_)
        sink_(success ? "jump" : "fail", ts);
}

void QteHarness::on_marker(const signal::Marker& marker)
{
    if (marker.label.rfind(config_.marker_prefix, 0) != 0)
        return;
    std::lock_guard lock(mutex_);
    QteTrial trial;
    trial.cls = marker.label.substr(config_.marker_prefix.size());
    trial.start_s = marker.timestamp;
    trials_.push_back(trial);
    if (sink_)
        sink_("qte_start:" + trial.cls, marker.timestamp);
}

void QteHarness::on_frame(const runtime::ControlFrame& frame, const runtime::TransferConfig& transfer)
{
    std::lock_guard lock(mutex_);
    for (std::size_t i = next_open_; i < trials_.size(); ++i) {
        QteTrial& t = trials_[i];
        if (t.resolved || frame.ts < t.start_s)
            continue;
        if (frame.ts > t.start_s + config_.duration_s) {
            resolve(t, false, t.start_s + config_.duration_s);
            continue;
        }
        bool hit = false;
        if (frame.label == t.cls && frame.label_index >= 0) {
            const double theta = transfer.thresholds.at(static_cast<std::size_t>(frame.label_index));
            hit = frame.probs(frame.label_index) >= theta;
        }
        t.bar = hit ? std::min(1.0, t.bar + config_.delta_up) : std::max(0.0, t.bar - config_.delta_down);
        if (t.bar >= 1.0 - 1e-9)
            resolve(t, true, frame.ts);
    }
    while (next_open_ < trials_.size() && trials_[next_open_].resolved)
        ++next_open_;
}

void QteHarness::finish(double ts)
{
    std::lock_guard lock(mutex_);
    for (auto& t : trials_)
        if (!t.resolved)
            resolve(t, false, std::min(ts, t.start_s + config_.duration_s));
    next_open_ = trials_.size();
}

std::vector<QteTrial> QteHarness::trials() const
{
    std::lock_guard lock(mutex_);
    return trials_;
}

std::size_t QteHarness::successes() const
{
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& t : trials_)
        n += t.success ? 1 : 0;
    return n;
}

double QteHarness::success_rate() const
{
    const auto all = trials();
    if (all.empty())
        return 0.0;
    return static_cast<double>(successes()) / static_cast<double>(all.size());
}

nlohmann::json QteHarness::to_json() const
{
    const auto all = trials();
    std::map<std::string, std::pair<int, int>> per_class;
    int total = 0;
    for (const auto& t : all) {
        auto& [attempts, wins] = per_class[t.cls];
        ++attempts;
        wins += t.success ? 1 : 0;
        total += t.success ? 1 : 0;
    }
    nlohmann::json classes = nlohmann::json::object();
    for (const auto& [cls, c] : per_class)
        classes[cls] = {{"attempts", c.first}, {"successes", c.second}};
    return {{"attempts", all.size()}, {"successes", total},
        {"success_rate", all.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(all.size())},
        {"classes", classes}};
}

std::string QteHarness::table() const
{
    const auto j = to_json();
    std::string out = "   class  attempts  successes   rate\n";
    char line[96];
    for (const auto& [cls, c] : j.at("classes").items()) {
        const int a = c.at("attempts").get<int>();
        const int s = c.at("successes").get<int>();
        std::snprintf(line, sizeof line, "%8s  %8d  %9d  %5.3f\n", cls.c_str(), a, s,
            a > 0 ? static_cast<double>(s) / a : 0.0);
        out += line;
    }
    std::snprintf(line, sizeof line, "   total  %8zu  %9d  %5.3f\n", j.at("attempts").get<std::size_t>(), j.at("successes").get<int>(),
        j.at("success_rate").get<double>());
    return out + line;
}

} // namespace mibci::sessions
