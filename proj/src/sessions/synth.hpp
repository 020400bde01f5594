#pragma once

#include "sessions/cue_schedule.hpp"
#include "signal/types.hpp"

#include <nlohmann/json.hpp>

#include <map>

namespace mibci::sessions {

struct Signature {
    std::string channel;
    double band_hz = 10.0;
    double erd_fraction = 0.5;
};

// Background 1/f noise plus phase-jittered oscillations at every band center
// on every channel. During the task phase of a class, the listed (channel,
// band) oscillations are scaled by (1 - erd_fraction).
struct SynthConfig {
    signal::Montage montage;
    std::vector<double> bands_hz {10.0, 20.0};
    std::map<std::string, std::vector<Signature>> signatures;
    double noise_amplitude = 5.0;        // uV, RMS of the pink background
    double oscillation_amplitude = 10.0; // uV, peak amplitude of each oscillation
    double snr = 1.0;                    // scales the oscillations
    /// Phase random-walk step (radians per sample) that widens each line.
    double phase_jitter = 0.2;
    std::uint64_t seed = 0;

    /// C3, Cz, C4, FC3, FC4, CP3, CP4, Pz; left -> C4, right -> C3 at 10 and 20 Hz, rest -> none.
    static SynthConfig defaults(double erd_fraction = 0.5, std::uint64_t seed = 0);
    static SynthConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    void validate() const;
};

signal::Recording synth_generate(const SynthConfig& config, const CueSchedule& schedule, double duration_s);

/// Resting data with calibration_start/calibration_end markers around `calibration_s` seconds.
signal::Recording synth_calibration(const SynthConfig& config, double calibration_s = 60.0,
    double lead_s = 5.0, double tail_s = 2.0);

} // namespace mibci::sessions
