#pragma once

#include "signal/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mibci::sessions {

struct PhaseDurations {
    double fixation_s = 2.0;
    double cue_s = 1.0;
    double task_s = 3.0;
    double break_s = 3.0;

    double trial_s() const noexcept { return fixation_s + cue_s + task_s + break_s; }
};

struct Cue {
    std::string cls;
    double onset_s = 0.0; // cue onset; the task starts cue_s later
};

struct CueSchedule {
    std::vector<Cue> cues;
    PhaseDurations phases;
    double lead_in_s = 12.0;
    std::uint64_t seed = 0;

    /// End of the last break.
    double duration_s() const;
    /// Markers in time order: "fixation", the class label at cue onset,
    /// "task:<class>" at task onset and "break".
    std::vector<signal::Marker> markers() const;
};

inline constexpr std::size_t kMaxRunLength = 3;

/// Balanced seeded order with no more than three identical classes in a row.
CueSchedule generate_cue_sequence(const std::vector<std::string>& classes, int n_per_class,
    std::uint64_t seed, const PhaseDurations& phases = {}, double lead_in_s = 12.0);

} // namespace mibci::sessions
