#pragma once

#include "signal/preprocess.hpp"

#include <cstdint>
#include <vector>

namespace mibci::features {

struct WindowConfig {
    double window_s = 1.0;
    double stride_s = 2.0 / 3.0;
};

/// Number of windows that fit into `frames`.
std::size_t window_count(Eigen::Index frames, Eigen::Index window_frames, double stride_frames);

signal::EpochSet window_epochs(const signal::EpochSet& epochs, const WindowConfig& config = {});

struct FeatureTensor {
    std::vector<Eigen::MatrixXd> sequences; // [feature_channels x time_steps]
    std::vector<int> labels;
    std::vector<std::size_t> parent;
    std::vector<Eigen::Index> offset;
    std::vector<std::string> class_names;
    Eigen::Index morlet_channels = 0;
    Eigen::Index csp_channels = 0;

    std::size_t size() const noexcept { return sequences.size(); }
    Eigen::Index feature_channels() const { return morlet_channels + csp_channels; }
    Eigen::Index steps() const { return sequences.empty() ? 0 : sequences.front().cols(); }

    FeatureTensor subset(const std::vector<std::size_t>& rows) const;
};

/// Broadcasts the CSP block along time and appends it below the Morlet rows.
/// An empty csp_block (zero columns) yields a Morlet-only tensor.
FeatureTensor stack_features(const std::vector<Eigen::MatrixXd>& morlet,
    const Eigen::MatrixXd& csp_block, const signal::EpochSet& provenance);

/// Single-window variant used online.
Eigen::MatrixXd stack_one(const Eigen::MatrixXd& morlet, const Eigen::VectorXd& csp);

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Stratified by class over parent epochs: every window of a parent lands on
// the same side. Per-class train counts use largest-remainder rounding so the
// overall train fraction is as close to `ratio` as parent granularity allows.
SplitIndices stratified_split(const std::vector<int>& labels,
    const std::vector<std::size_t>& parents, double ratio, std::uint64_t seed);

SplitIndices stratified_split(const FeatureTensor& tensor, double ratio, std::uint64_t seed);

} // namespace mibci::features
