#pragma once

#include "signal/preprocess.hpp"

#include <complex>
#include <vector>

namespace mibci::features {

struct MorletConfig {
    std::vector<double> freqs_hz = default_freqs();
    double n_cycles = 2.0;
    int time_decim = 3;

    /// 6-32 Hz in 2 Hz steps.
    static std::vector<double> default_freqs();
};

class MorletBank {
public:
    MorletBank(const MorletConfig& config, double sample_rate_hz);

    const MorletConfig& config() const noexcept { return config_; }
    std::size_t size() const noexcept { return wavelets_.size(); }
    const std::vector<std::complex<double>>& wavelet(std::size_t i) const { return wavelets_[i]; }

    Eigen::Index output_steps(Eigen::Index frames) const;

    /// Power for one segment: rows are channel * n_freqs + freq, columns are decimated time.
    Eigen::MatrixXd power(const Eigen::MatrixXd& segment) const;

private:
    MorletConfig config_;
    double sample_rate_hz_;
    std::vector<std::vector<std::complex<double>>> wavelets_;
};

/// One [channels*freqs x steps] power matrix per epoch.
std::vector<Eigen::MatrixXd> morlet_power(const signal::EpochSet& epochs, const MorletConfig& config);

} // namespace mibci::features
