#include "signal/filter.hpp"

#include "common/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mibci::signal {

using cplx = std::complex<double>;

namespace {

// Kept below the requested stopband level so rounding in the cascade never
// leaves the attenuation a hair short of the stated bound.
constexpr double kStopbandMarginDb = 0.01;
constexpr double kStabilityMargin = 1e-9;

struct Zpk {
    std::vector<cplx> zeros;
    std::vector<cplx> poles;
    double gain = 1.0;
};

// Chebyshev II lowpass prototype with its stopband edge at 1 rad/s.
Zpk chebyshev2_prototype(int order, double stopband_db)
{
    const double n = order;
    const double de = 1.0 / std::sqrt(std::pow(10.0, 0.1 * stopband_db) - 1.0);
    const double mu = std::asinh(1.0 / de) / n;
    Zpk proto;
    for (int m = -order + 1; m < order; m += 2) {
        const double theta = std::numbers::pi * m / (2.0 * n);
        if (order % 2 == 1 && m == 0) {
            // odd orders have no finite zero at the center index
        } else {
            proto.zeros.emplace_back(0.0, 1.0 / std::sin(theta));
        }
        const cplx base = -std::exp(cplx(0.0, theta));
        const cplx stretched(std::sinh(mu) * base.real(), std::cosh(mu) * base.imag());
        proto.poles.push_back(1.0 / stretched);
    }
    cplx num(1.0, 0.0), den(1.0, 0.0);
    for (const auto& p : proto.poles)
        num *= -p;
    for (const auto& z : proto.zeros)
        den *= -z;
    proto.gain = (num / den).real();
    return proto;
}

Zpk lowpass_to_bandpass(const Zpk& lp, double center, double bandwidth)
{
    Zpk bp;
    auto split = [&](const cplx& r, std::vector<cplx>& out) {
        const cplx half = r * bandwidth / 2.0;
        const cplx disc = std::sqrt(half * half - center * center);
        out.push_back(half + disc);
        out.push_back(half - disc);
    };
    for (const auto& z : lp.zeros)
        split(z, bp.zeros);
    for (const auto& p : lp.poles)
        split(p, bp.poles);
    const std::size_t extra = lp.poles.size() - lp.zeros.size();
    for (std::size_t i = 0; i < extra; ++i)
        bp.zeros.emplace_back(0.0, 0.0);
    bp.gain = lp.gain * std::pow(bandwidth, static_cast<double>(extra));
    return bp;
}

Zpk bilinear(const Zpk& analog, double sample_rate_hz)
{
    const double fs2 = 2.0 * sample_rate_hz;
    Zpk digital;
    cplx num(1.0, 0.0), den(1.0, 0.0);
    for (const auto& z : analog.zeros) {
        digital.zeros.push_back((fs2 + z) / (fs2 - z));
        num *= fs2 - z;
    }
    for (const auto& p : analog.poles) {
        digital.poles.push_back((fs2 + p) / (fs2 - p));
        den *= fs2 - p;
    }
    for (std::size_t i = analog.zeros.size(); i < analog.poles.size(); ++i)
        digital.zeros.emplace_back(-1.0, 0.0);
    digital.gain = analog.gain * (num / den).real();
    return digital;
}

cplx biquad_response(const Biquad& s, double omega)
{
    const cplx z1 = std::exp(cplx(0.0, -omega));
    const cplx z2 = z1 * z1;
    return (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
}

std::vector<Biquad> pair_sections(const Zpk& digital)
{
    std::vector<cplx> upper_poles, upper_zeros;
    for (const auto& p : digital.poles)
        if (p.imag() > 0)
            upper_poles.push_back(p);
    for (const auto& z : digital.zeros)
        if (z.imag() > 0)
            upper_zeros.push_back(z);
    require(upper_poles.size() * 2 == digital.poles.size()
            && upper_zeros.size() * 2 == digital.zeros.size()
            && upper_poles.size() == upper_zeros.size(),
        ErrorCode::kDesign, "filter roots do not form conjugate pairs");

    // Poles nearest the unit circle first, each paired with its closest zero.
    std::sort(upper_poles.begin(), upper_poles.end(),
        [](const cplx& a, const cplx& b) { return std::abs(a) > std::abs(b); });
    std::vector<Biquad> sections;
    for (const auto& p : upper_poles) {
        auto nearest = std::min_element(upper_zeros.begin(), upper_zeros.end(),
            [&](const cplx& a, const cplx& b) { return std::abs(a - p) < std::abs(b - p); });
        const cplx z = *nearest;
        upper_zeros.erase(nearest);
        Biquad s;
        s.b0 = 1.0;
        s.b1 = -2.0 * z.real();
        s.b2 = std::norm(z);
        s.a1 = -2.0 * p.real();
        s.a2 = std::norm(p);
        sections.push_back(s);
    }
    return sections;
}

} // namespace

FilterState::FilterState(std::vector<Biquad> sections, std::size_t channels, BandpassDesign design)
    : sections_(std::move(sections))
    , channels_(channels)
    , design_(design)
    , delay_(channels * sections_.size() * 2, 0.0)
{
}

FilterState FilterState::identity(std::size_t channels)
{
    return FilterState({}, channels);
}

std::vector<cplx> FilterState::poles() const
{
    std::vector<cplx> out;
    for (const auto& s : sections_) {
        const cplx disc = std::sqrt(cplx(s.a1 * s.a1 - 4.0 * s.a2, 0.0));
        out.push_back((-s.a1 + disc) / 2.0);
        out.push_back((-s.a1 - disc) / 2.0);
    }
    return out;
}

cplx FilterState::response(double freq_hz, double sample_rate_hz) const
{
    const double omega = 2.0 * std::numbers::pi * freq_hz / sample_rate_hz;
    cplx h(1.0, 0.0);
    for (const auto& s : sections_)
        h *= biquad_response(s, omega);
    return h;
}

void FilterState::reset()
{
    std::fill(delay_.begin(), delay_.end(), 0.0);
}

void FilterState::process(Eigen::MatrixXd& samples)
{
    require(samples.rows() == static_cast<Eigen::Index>(channels_), ErrorCode::kShape,
        "chunk has " + std::to_string(samples.rows()) + " channels, filter expects "
            + std::to_string(channels_));
    const std::size_t n_sec = sections_.size();
    if (n_sec == 0)
        return;
    for (std::size_t ch = 0; ch < channels_; ++ch) {
        double* z = delay_.data() + ch * n_sec * 2;
        const Eigen::Index row = static_cast<Eigen::Index>(ch);
        for (Eigen::Index t = 0; t < samples.cols(); ++t) {
            double x = samples(row, t);
            for (std::size_t k = 0; k < n_sec; ++k) {
                const Biquad& s = sections_[k];
                double* zk = z + 2 * k;
                const double y = s.b0 * x + zk[0];
                zk[0] = s.b1 * x - s.a1 * y + zk[1];
                zk[1] = s.b2 * x - s.a2 * y;
                x = y;
            }
            samples(row, t) = x;
        }
    }
}

FilterState design_bandpass(const BandpassDesign& design, std::size_t channels)
{
    const double nyquist = design.sample_rate_hz / 2.0;
    require(design.sample_rate_hz > 0, ErrorCode::kParameter, "sample rate must be positive");
    require(design.low_hz > 0 && design.low_hz < design.high_hz && design.high_hz < nyquist,
        ErrorCode::kParameter, "band edges must satisfy 0 < low < high < Nyquist");
    require(design.order >= 4 && design.order % 2 == 0, ErrorCode::kParameter,
        "filter order must be even and at least 4");
    require(design.stopband_db > 0, ErrorCode::kParameter, "stopband attenuation must be positive");
    const double stop_low = design.resolved_stop_low();
    const double stop_high = design.resolved_stop_high();
    require(stop_low > 0 && stop_low < design.low_hz && stop_high > design.high_hz
            && stop_high < nyquist,
        ErrorCode::kParameter, "stopband edges must bracket the passband below Nyquist");
    require(channels > 0, ErrorCode::kParameter, "filter needs at least one channel");

    const double fs = design.sample_rate_hz;
    auto prewarp = [fs](double f) { return 2.0 * fs * std::tan(std::numbers::pi * f / fs); };
    const double wl = prewarp(stop_low);
    const double wh = prewarp(stop_high);

    const Zpk proto = chebyshev2_prototype(design.order, design.stopband_db + kStopbandMarginDb);
    const Zpk analog = lowpass_to_bandpass(proto, std::sqrt(wl * wh), wh - wl);
    const Zpk digital = bilinear(analog, fs);

    for (const auto& p : digital.poles)
        require(std::isfinite(p.real()) && std::isfinite(p.imag())
                && std::abs(p) < 1.0 - kStabilityMargin,
            ErrorCode::kDesign, "designed filter is not stable");

    std::vector<Biquad> sections = pair_sections(digital);

    const double omega_c = 2.0 * std::numbers::pi * std::sqrt(design.low_hz * design.high_hz) / fs;
    double total = digital.gain;
    for (auto& s : sections) {
        const double mag = std::abs(biquad_response(s, omega_c));
        require(mag > 0 && std::isfinite(mag), ErrorCode::kDesign, "degenerate filter section");
        s.b0 /= mag;
        s.b1 /= mag;
        s.b2 /= mag;
        total *= mag;
    }
    sections.front().b0 *= total;
    sections.front().b1 *= total;
    sections.front().b2 *= total;

    FilterState state(std::move(sections), channels, design);
    for (const auto& p : state.poles())
        require(std::abs(p) < 1.0 - kStabilityMargin, ErrorCode::kDesign,
            "filter section lost stability after pairing");
    return state;
}

SampleChunk apply_filter(FilterState& state, const SampleChunk& chunk)
{
    SampleChunk out = chunk;
    state.process(out.samples);
    return out;
}

namespace {

// Group delay (samples) of c0 + c1 z^-1 + c2 z^-2.
double polynomial_delay(double c0, double c1, double c2, double omega)
{
    const cplx e1 = std::exp(cplx(0.0, -omega));
    const cplx e2 = e1 * e1;
    const cplx value = c0 + c1 * e1 + c2 * e2;
    const cplx ramp = c1 * e1 + 2.0 * c2 * e2;
    return (ramp / value).real();
}

} // namespace

std::vector<double> measure_group_delay(
    const FilterState& state, std::span<const double> freqs_hz, double sample_rate_hz)
{
    std::vector<double> out;
    out.reserve(freqs_hz.size());
    for (const double f : freqs_hz) {
        require(f > 0 && f < sample_rate_hz / 2.0, ErrorCode::kParameter,
            "group delay frequency must lie in (0, Nyquist)");
        const double omega = 2.0 * std::numbers::pi * f / sample_rate_hz;
        double samples = 0.0;
        for (const auto& s : state.sections())
            samples += polynomial_delay(s.b0, s.b1, s.b2, omega)
                - polynomial_delay(1.0, s.a1, s.a2, omega);
        out.push_back(samples / sample_rate_hz);
    }
    return out;
}

} // namespace mibci::signal
