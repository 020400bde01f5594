#include "features/morlet.hpp"

#include "common/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mibci::features {

std::vector<double> MorletConfig::default_freqs()
{
    std::vector<double> f;
    for (int hz = 6; hz <= 32; hz += 2)
        f.push_back(hz);
    return f;
}

MorletBank::MorletBank(const MorletConfig& config, double sample_rate_hz)
    : config_(config)
    , sample_rate_hz_(sample_rate_hz)
{
    require(!config.freqs_hz.empty(), ErrorCode::kParameter, "Morlet frequency grid is empty");
    require(config.n_cycles > 0, ErrorCode::kParameter, "Morlet cycles must be positive");
    require(config.time_decim >= 1, ErrorCode::kParameter, "time decimation must be >= 1");
    for (const double f : config.freqs_hz) {
        require(f > 0 && f < sample_rate_hz / 2.0, ErrorCode::kParameter,
            "Morlet frequency " + std::to_string(f) + " Hz is outside (0, Nyquist)");
        const double sigma_t = config.n_cycles / (2.0 * std::numbers::pi * f);
        const auto half = static_cast<int>(std::ceil(5.0 * sigma_t * sample_rate_hz - 1e-9)) - 1;
        std::vector<std::complex<double>> w;
        double norm = 0.0;
        for (int k = -half; k <= half; ++k) {
            const double t = k / sample_rate_hz;
            const auto v = std::exp(std::complex<double>(0.0, 2.0 * std::numbers::pi * f * t))
                * std::exp(-t * t / (2.0 * sigma_t * sigma_t));
            norm += std::norm(v);
            w.push_back(v);
        }
        const double scale = 1.0 / (std::sqrt(0.5) * std::sqrt(norm));
        for (auto& v : w)
            v *= scale;
        wavelets_.push_back(std::move(w));
    }
}

Eigen::Index MorletBank::output_steps(Eigen::Index frames) const
{
    return (frames + config_.time_decim - 1) / config_.time_decim;
}

Eigen::MatrixXd MorletBank::power(const Eigen::MatrixXd& segment) const
{
    const double lowest = *std::min_element(config_.freqs_hz.begin(), config_.freqs_hz.end());
    require(static_cast<double>(segment.cols()) >= config_.n_cycles * sample_rate_hz_ / lowest - 1e-9,
        ErrorCode::kParameter, "segment too short for the lowest Morlet frequency");

    const Eigen::Index n_freq = static_cast<Eigen::Index>(wavelets_.size());
    const Eigen::Index steps = output_steps(segment.cols());
    const Eigen::Index frames = segment.cols();
    Eigen::MatrixXd out(segment.rows() * n_freq, steps);
    for (Eigen::Index c = 0; c < segment.rows(); ++c) {
        const Eigen::RowVectorXd x = segment.row(c);
        for (Eigen::Index f = 0; f < n_freq; ++f) {
            const auto& w = wavelets_[static_cast<std::size_t>(f)];
            const auto len = static_cast<Eigen::Index>(w.size());
            const Eigen::Index half = (len - 1) / 2;
            for (Eigen::Index s = 0; s < steps; ++s) {
                const Eigen::Index t = s * config_.time_decim;
                // 'same'-mode convolution with zero padding
                const Eigen::Index k_lo = std::max<Eigen::Index>(0, t + half - (frames - 1));
                const Eigen::Index k_hi = std::min<Eigen::Index>(len - 1, t + half);
                double re = 0.0, im = 0.0;
                for (Eigen::Index k = k_lo; k <= k_hi; ++k) {
                    const double xv = x(t + half - k);
                    re += w[static_cast<std::size_t>(k)].real() * xv;
                    im += w[static_cast<std::size_t>(k)].imag() * xv;
                }
                out(c * n_freq + f, s) = re * re + im * im;
            }
        }
    }
    return out;
}

std::vector<Eigen::MatrixXd> morlet_power(const signal::EpochSet& epochs, const MorletConfig& config)
{
    const MorletBank bank(config, epochs.sample_rate_hz);
    std::vector<Eigen::MatrixXd> out;
    out.reserve(epochs.size());
    for (const auto& e : epochs.epochs)
        out.push_back(bank.power(e));
    return out;
}

} // namespace mibci::features
