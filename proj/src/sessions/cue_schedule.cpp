#include "sessions/cue_schedule.hpp"

#include "common/error.hpp"

#include <algorithm>
#include <random>

namespace mibci::sessions {

double CueSchedule::duration_s() const
{
    return lead_in_s + static_cast<double>(cues.size()) * phases.trial_s();
}

std::vector<signal::Marker> CueSchedule::markers() const
{
    std::vector<signal::Marker> out;
    for (const auto& c : cues) {
        out.push_back({c.onset_s - phases.fixation_s, "fixation"});
        out.push_back({c.onset_s, c.cls});
        out.push_back({c.onset_s + phases.cue_s, "task:" + c.cls});
        out.push_back({c.onset_s + phases.cue_s + phases.task_s, "break"});
    }
    return out;
}

CueSchedule generate_cue_sequence(const std::vector<std::string>& classes, int n_per_class,
    std::uint64_t seed, const PhaseDurations& phases, double lead_in_s)
{
    require(n_per_class >= 1, ErrorCode::kParameter, "n_per_class must be at least 1");
    require(!classes.empty(), ErrorCode::kParameter, "no cue classes given");
    require(phases.cue_s > 0 && phases.task_s > 0 && phases.break_s >= 0 && phases.fixation_s >= 0,
        ErrorCode::kParameter, "phase durations must be positive");
    const bool capped = classes.size() > 1;

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order;
    // Draw proportionally to the remaining counts; restart on the rare dead end
    // where only a capped class is left.
    for (;;) {
        std::vector<int> remaining(classes.size(), n_per_class);
        order.clear();
        bool dead_end = false;
        const std::size_t total = classes.size() * static_cast<std::size_t>(n_per_class);
        while (order.size() < total) {
            std::size_t blocked = classes.size();
            if (capped && order.size() >= kMaxRunLength
                && std::all_of(order.end() - kMaxRunLength, order.end(), [&](std::size_t c) { return c == order.back(); }))
                blocked = order.back();
            int pool = 0;
            for (std::size_t c = 0; c < classes.size(); ++c)
                if (c != blocked)
                    pool += remaining[c];
            if (pool == 0) {
                dead_end = true;
                break;
            }
            auto pick = static_cast<int>(rng() % static_cast<std::uint64_t>(pool));
            for (std::size_t c = 0; c < classes.size(); ++c) {
                if (c == blocked)
                    continue;
                if (pick < remaining[c]) {
                    order.push_back(c);
                    --remaining[c];
                    break;
                }
                pick -= remaining[c];
            }
        }
        if (!dead_end)
            break;
    }

    CueSchedule s;
    s.phases = phases;
    s.lead_in_s = lead_in_s;
    s.seed = seed;
    for (std::size_t i = 0; i < order.size(); ++i)
        s.cues.push_back({classes[order[i]],
            lead_in_s + static_cast<double>(i) * phases.trial_s() + phases.fixation_s});
    return s;
}

} // namespace mibci::sessions
