#include "sessions/synth.hpp"

#include "classify/s4d_model.hpp"
#include "common/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mibci::sessions {

SynthConfig SynthConfig::defaults(double erd_fraction, std::uint64_t seed)
{
    SynthConfig c;
    c.montage.channel_names = {"C3", "Cz", "C4", "FC3", "FC4", "CP3", "CP4", "Pz"};
    c.montage.sample_rate_hz = 250.0;
    c.signatures["left"] = {{"C4", 10.0, erd_fraction}, {"C4", 20.0, erd_fraction}};
    c.signatures["right"] = {{"C3", 10.0, erd_fraction}, {"C3", 20.0, erd_fraction}};
    c.signatures["rest"] = {};
    c.seed = seed;
    return c;
}

void SynthConfig::validate() const
{
    montage.validate();
    require(!bands_hz.empty(), ErrorCode::kConfig, "synthetic config needs at least one band");
    for (double b : bands_hz)
        require(b > 0 && b < montage.sample_rate_hz / 2.0, ErrorCode::kConfig, "band center outside (0, Nyquist)");
    require(noise_amplitude >= 0 && oscillation_amplitude >= 0 && snr >= 0 && phase_jitter >= 0,
        ErrorCode::kConfig, "synthetic amplitudes must be non-negative");
    for (const auto& [cls, sigs] : signatures)
        for (const auto& s : sigs) {
            require(montage.index_of(s.channel).has_value(), ErrorCode::kConfig,
                "signature channel '" + s.channel + "' is not in the montage");
            require(s.erd_fraction >= 0 && s.erd_fraction <= 1, ErrorCode::kConfig,
                "erd_fraction must lie in [0, 1]");
            require(std::find(bands_hz.begin(), bands_hz.end(), s.band_hz) != bands_hz.end(),
                ErrorCode::kConfig, "signature band is not one of the configured bands");
        }
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j)
{
    SynthConfig c = defaults(j.value("erd_fraction", 0.5), j.value("seed", std::uint64_t {0}));
    try {
        if (j.contains("channels"))
            c.montage.channel_names = j.at("channels").get<std::vector<std::string>>();
        c.montage.sample_rate_hz = j.value("sample_rate_hz", c.montage.sample_rate_hz);
        if (j.contains("bands_hz"))
            c.bands_hz = j.at("bands_hz").get<std::vector<double>>();
        c.noise_amplitude = j.value("noise_amplitude", c.noise_amplitude);
        c.oscillation_amplitude = j.value("oscillation_amplitude", c.oscillation_amplitude);
        c.snr = j.value("snr", c.snr);
        c.phase_jitter = j.value("phase_jitter", c.phase_jitter);
        if (j.contains("signatures")) {
            c.signatures.clear();
            for (const auto& [cls, list] : j.at("signatures").items()) {
                auto& sigs = c.signatures[cls];
                for (const auto& s : list)
                    sigs.push_back({s.at("channel").get<std::string>(), s.at("band_hz").get<double>(),
                        s.at("erd_fraction").get<double>()});
            }
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kConfig, std::string("malformed synthetic config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json SynthConfig::to_json() const
{
    nlohmann::json sig = nlohmann::json::object();
    for (const auto& [cls, sigs] : signatures) {
        sig[cls] = nlohmann::json::array();
        for (const auto& s : sigs)
            sig[cls].push_back({{"channel", s.channel}, {"band_hz", s.band_hz}, {"erd_fraction", s.erd_fraction}});
    }
    return {{"channels", montage.channel_names}, {"sample_rate_hz", montage.sample_rate_hz},
        {"bands_hz", bands_hz}, {"signatures", sig}, {"noise_amplitude", noise_amplitude},
        {"oscillation_amplitude", oscillation_amplitude}, {"snr", snr}, {"phase_jitter", phase_jitter},
        {"seed", seed}};
}

namespace {

// Paul Kellett's refined pink-noise filter, scaled to roughly unit RMS.
class PinkNoise {
public:
    double next(double white)
    {
        b_[0] = 0.99886 * b_[0] + white * 0.0555179;
        b_[1] = 0.99332 * b_[1] + white * 0.0750759;
        b_[2] = 0.96900 * b_[2] + white * 0.1538520;
        b_[3] = 0.86650 * b_[3] + white * 0.3104856;
        b_[4] = 0.55000 * b_[4] + white * 0.5329522;
        b_[5] = -0.7616 * b_[5] - white * 0.0168980;
        const double out = b_[0] + b_[1] + b_[2] + b_[3] + b_[4] + b_[5] + b_[6] + white * 0.5362;
        b_[6] = white * 0.115926;
        return out / 3.0;
    }

private:
    double b_[7] = {};
};

// Gain per (channel, band) at each frame: 1 outside task phases.
Eigen::MatrixXd erd_gains(const SynthConfig& config, const CueSchedule& schedule, Eigen::Index frames,
    std::size_t band, Eigen::Index channels)
{
    Eigen::MatrixXd g = Eigen::MatrixXd::Ones(channels, frames);
    const double fs = config.montage.sample_rate_hz;
    for (const auto& cue : schedule.cues) {
        const auto it = config.signatures.find(cue.cls);
        if (it == config.signatures.end())
            continue;
        const double start = cue.onset_s + schedule.phases.cue_s;
        const auto a = static_cast<Eigen::Index>(std::llround(start * fs));
        const auto b = std::min(frames, static_cast<Eigen::Index>(std::llround((start + schedule.phases.task_s) * fs)));
        for (const auto& s : it->second) {
            if (s.band_hz != config.bands_hz[band])
                continue;
            const auto ch = static_cast<Eigen::Index>(*config.montage.index_of(s.channel));
            if (b > a)
                g.row(ch).segment(a, b - a).array() *= 1.0 - s.erd_fraction;
        }
    }
    return g;
}

signal::Recording generate(const SynthConfig& config, const CueSchedule* schedule, double duration_s)
{
    config.validate();
    const double fs = config.montage.sample_rate_hz;
    const auto frames = static_cast<Eigen::Index>(std::llround(duration_s * fs));
    const auto channels = static_cast<Eigen::Index>(config.montage.channel_count());
    signal::Recording rec;
    rec.montage = config.montage;
    rec.session_id = "synth-" + std::to_string(config.seed);
    rec.samples = Eigen::MatrixXd::Zero(channels, frames);

    classify::Rng rng(config.seed ^ 0x5EEDC0FFEEULL);
    for (Eigen::Index c = 0; c < channels; ++c) {
        PinkNoise pink;
        // Settle the slow filter states before the first stored sample.
        for (int i = 0; i < 2000; ++i)
            pink.next(rng.normal());
        for (Eigen::Index t = 0; t < frames; ++t)
            rec.samples(c, t) = config.noise_amplitude * pink.next(rng.normal());
    }
    const double amp = config.oscillation_amplitude * config.snr;
    for (std::size_t b = 0; b < config.bands_hz.size(); ++b) {
        const Eigen::MatrixXd gains = schedule ? erd_gains(config, *schedule, frames, b, channels)
                                               : Eigen::MatrixXd::Ones(channels, frames);
        const double step = 2.0 * std::numbers::pi * config.bands_hz[b] / fs;
        for (Eigen::Index c = 0; c < channels; ++c) {
            double phase = 2.0 * std::numbers::pi * rng.uniform();
            for (Eigen::Index t = 0; t < frames; ++t) {
                rec.samples(c, t) += amp * gains(c, t) * std::sin(phase);
                phase += step + config.phase_jitter * rng.normal();
            }
        }
    }
    rec.samples = rec.samples.cast<float>().cast<double>();
    return rec;
}

} // namespace

signal::Recording synth_generate(const SynthConfig& config, const CueSchedule& schedule, double duration_s)
{
    require(duration_s + 1e-9 >= schedule.duration_s(), ErrorCode::kParameter,
        "duration does not cover the cue schedule");
    signal::Recording rec = generate(config, &schedule, duration_s);
    rec.markers = schedule.markers();
    return rec;
}

signal::Recording synth_calibration(const SynthConfig& config, double calibration_s, double lead_s, double tail_s)
{
    require(calibration_s > 0 && lead_s >= 0 && tail_s >= 0, ErrorCode::kParameter,
        "calibration durations must be positive");
    signal::Recording rec = generate(config, nullptr, lead_s + calibration_s + tail_s);
    rec.session_id = "synth-calibration-" + std::to_string(config.seed);
    rec.markers = {{lead_s, "calibration_start"}, {lead_s + calibration_s, "calibration_end"}};
    return rec;
}

} // namespace mibci::sessions
