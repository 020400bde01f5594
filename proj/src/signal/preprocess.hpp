#pragma once

#include "signal/recording.hpp"
#include "signal/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mibci::signal {

Recording crop_head(const Recording& recording, double seconds);

struct RejectionCriteria {
    double flatline_s = 5.0;
    double noise_z = 5.0;
    double spike_uv = 500.0;
};

struct RejectedChannel {
    std::string label;
    std::string reason;
};

struct RejectionResult {
    Recording recording;
    std::vector<RejectedChannel> rejected;
};

RejectionResult reject_channels(const Recording& recording, const RejectionCriteria& criteria);

/// Keeps the listed channels in the given order.
Recording select_channels(const Recording& recording, const std::vector<std::string>& labels);

/// Subtracts, per frame, the mean over the included channel rows.
Eigen::MatrixXd common_average_reference(
    const Eigen::MatrixXd& samples, const std::vector<std::size_t>& included);
SampleChunk common_average_reference(
    const SampleChunk& chunk, const std::vector<std::size_t>& included);

struct EpochConfig {
    /// Epoch bounds relative to the cue marker. The default covers the 3 s
    /// task phase that follows the 1 s cue.
    double tmin = 1.0;
    double tmax = 4.0;
    double baseline_start = -0.5;
    double baseline_end = 0.0;
};

struct NormalizationStats {
    std::vector<double> mean;
    std::vector<double> stddev;
    /// Channels whose variance fell under the epsilon guard.
    std::vector<std::size_t> flagged;
};

struct EpochSet {
    std::vector<Eigen::MatrixXd> epochs; // each [channels x frames]
    std::vector<int> labels;
    std::vector<std::string> class_names;
    std::vector<std::string> channel_names;
    double sample_rate_hz = 250.0;
    double tmin = 0.0;
    double tmax = 0.0;
    double baseline_start = 0.0;
    double baseline_end = 0.0;
    std::optional<NormalizationStats> normalization;
    /// Source epoch index and frame offset; identity for unwindowed sets.
    std::vector<std::size_t> parent;
    std::vector<Eigen::Index> offset;
    std::size_t skipped = 0;

    std::size_t size() const noexcept { return epochs.size(); }
    Eigen::Index channels() const { return epochs.empty() ? 0 : epochs.front().rows(); }
    Eigen::Index frames() const { return epochs.empty() ? 0 : epochs.front().cols(); }
};

/// Sorted unique class names of the mapping; the label index of a class is its position here.
std::vector<std::string> class_names_of(const ClassMapping& mapping);

EpochSet epoch_and_baseline(
    const Recording& recording, const ClassMapping& mapping, const EpochConfig& config);

struct NormalizeResult {
    EpochSet epochs;
    NormalizationStats stats;
};

NormalizeResult normalize_epochs(
    const EpochSet& epochs, const std::optional<NormalizationStats>& stats = std::nullopt);

/// Applies per-channel z-scoring to continuous samples.
void apply_normalization(Eigen::MatrixXd& samples, const NormalizationStats& stats);

} // namespace mibci::signal
