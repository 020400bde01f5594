#pragma once

#include "signal/types.hpp"

#include <complex>
#include <span>
#include <vector>

namespace mibci::signal {

struct BandpassDesign {
    double low_hz = 1.0;
    double high_hz = 40.0;
    /// Order of the lowpass prototype; the bandpass has twice as many poles.
    int order = 8;
    double stopband_db = 40.0;
    double sample_rate_hz = 250.0;
    /// Stopband edges; non-positive values select 0.5 * low_hz and 1.2 * high_hz.
    double stop_low_hz = 0.0;
    double stop_high_hz = 0.0;

    double resolved_stop_low() const { return stop_low_hz > 0 ? stop_low_hz : 0.5 * low_hz; }
    double resolved_stop_high() const { return stop_high_hz > 0 ? stop_high_hz : 1.2 * high_hz; }
};

/// Normalized biquad, a0 == 1.
struct Biquad {
    double b0 = 1, b1 = 0, b2 = 0;
    double a1 = 0, a2 = 0;
};

// Cascade of second-order sections with per-channel transposed direct-form II
// delay lines. Processing is sample-serial, so any chunking of a stream gives
// bit-identical output.
class FilterState {
public:
    FilterState(std::vector<Biquad> sections, std::size_t channels, BandpassDesign design = {});

    static FilterState identity(std::size_t channels);

    const std::vector<Biquad>& sections() const noexcept { return sections_; }
    const BandpassDesign& design() const noexcept { return design_; }
    std::size_t channels() const noexcept { return channels_; }

    /// Poles of every section (two per section).
    std::vector<std::complex<double>> poles() const;

    /// Complex response at frequency (Hz) for the given sample rate.
    std::complex<double> response(double freq_hz, double sample_rate_hz) const;

    void reset();

    /// Filters in place; samples must have channels() rows.
    void process(Eigen::MatrixXd& samples);

private:
    std::vector<Biquad> sections_;
    std::size_t channels_;
    BandpassDesign design_;
    // [channel][section][2]
    std::vector<double> delay_;
};

/// Chebyshev type II IIR bandpass.
FilterState design_bandpass(const BandpassDesign& design, std::size_t channels);

SampleChunk apply_filter(FilterState& state, const SampleChunk& chunk);

/// Group delay in seconds at each frequency.
std::vector<double> measure_group_delay(
    const FilterState& state, std::span<const double> freqs_hz, double sample_rate_hz);

} // namespace mibci::signal
