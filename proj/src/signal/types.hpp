#pragma once

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mibci::signal {

enum class ReferenceScheme { kDevice, kCommonAverage };

struct Montage {
    std::vector<std::string> channel_names;
    double sample_rate_hz = 250.0;
    ReferenceScheme reference_scheme = ReferenceScheme::kDevice;

    std::size_t channel_count() const noexcept { return channel_names.size(); }
    std::optional<std::size_t> index_of(const std::string& label) const;

    /// Throws kParameter when labels repeat, the list is empty or the rate is not positive.
    void validate() const;
};

/// 24-channel 10-20 layout matching the default headset configuration.
Montage default_montage(double sample_rate_hz = 250.0);

struct Marker {
    double timestamp = 0.0;
    std::string label;

    bool operator==(const Marker&) const = default;
};

/// Samples are [channels x frames] in microvolts.
struct SampleChunk {
    Eigen::MatrixXd samples;
    double start_timestamp = 0.0;
    std::shared_ptr<const Montage> montage;

    Eigen::Index channels() const noexcept { return samples.rows(); }
    Eigen::Index frames() const noexcept { return samples.cols(); }
};

struct Recording {
    Montage montage;
    Eigen::MatrixXd samples;
    std::vector<Marker> markers;
    std::string session_id;

    Eigen::Index frames() const noexcept { return samples.cols(); }
    double duration_s() const noexcept
    {
        return static_cast<double>(samples.cols()) / montage.sample_rate_hz;
    }
};

} // namespace mibci::signal
