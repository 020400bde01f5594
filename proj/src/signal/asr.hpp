#pragma once

#include "signal/types.hpp"

namespace mibci::signal {

struct AsrConfig {
    double cutoff_k = 20.0;
    /// Processing window in seconds.
    double window_s = 0.5;
    /// Sub-window used for the calibration RMS statistics, 50% overlap.
    double calibration_window_s = 1.0;
    /// Upper bound on the fraction of directions removed from one window.
    double max_dims_fraction = 0.66;
};

// Calibration state: M is the matrix square root of the robust calibration
// covariance; row i of `threshold_matrix` is threshold_i * v_i^T for calibration
// eigenvector v_i.
struct AsrModel {
    Eigen::MatrixXd mixing;
    Eigen::MatrixXd threshold_matrix;
    Eigen::VectorXd component_mean;
    Eigen::VectorXd component_std;
    Eigen::VectorXd thresholds;
    double cutoff_k = 20.0;
    double sample_rate_hz = 250.0;
    Eigen::Index window_frames = 125;
    double max_dims_fraction = 0.66;

    Eigen::Index channels() const noexcept { return mixing.rows(); }
};

/// `calibration` is [channels x frames], already bandpass-filtered.
AsrModel asr_calibrate(
    const Eigen::MatrixXd& calibration, double sample_rate_hz, const AsrConfig& config = {});

struct AsrDecision {
    /// Identity is represented by an empty matrix.
    Eigen::MatrixXd reconstruction;
    Eigen::Index rejected = 0;
};

/// Reconstruction operator for one processing window.
AsrDecision asr_reconstruction(const AsrModel& model, const Eigen::MatrixXd& window);

/// Cleans one window; returns the input unchanged when no direction exceeds its threshold.
SampleChunk asr_process(const AsrModel& model, const SampleChunk& window);

// Streaming application: each block is cleaned with the operator estimated on
// the trailing processing window that ends with that block.
class AsrStream {
public:
    explicit AsrStream(const AsrModel& model, Eigen::Index block_frames = 25);

    void process(Eigen::MatrixXd& samples);

    std::size_t windows_modified() const noexcept { return modified_; }

private:
    void process_block(Eigen::Ref<Eigen::MatrixXd> block);

    AsrModel model_;
    Eigen::Index block_frames_;
    Eigen::MatrixXd history_;
    Eigen::Index filled_ = 0;
    std::size_t modified_ = 0;
};

} // namespace mibci::signal
