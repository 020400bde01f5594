#pragma once

#include "classify/bundle.hpp"
#include "classify/s4d_train.hpp"
#include "features/morlet.hpp"
#include "signal/asr.hpp"
#include "signal/filter.hpp"

#include <memory>
#include <optional>

namespace mibci::runtime {

// Online counterpart of the offline signal path: channel selection, bandpass,
// streaming ASR, common average reference and normalization with the stats
// stored in the bundle. ASR always runs before CAR.
class Preprocessor {
public:
    /// Throws kStartup when the source montage lacks a model channel or runs at another rate.
    Preprocessor(const classify::ModelBundle& bundle, const signal::Montage& source);

    Eigen::MatrixXd process(const Eigen::MatrixXd& raw);

    std::size_t asr_windows_modified() const { return asr_ ? asr_->windows_modified() : 0; }

private:
    std::vector<Eigen::Index> rows_;
    std::vector<std::size_t> car_channels_;
    signal::FilterState filter_;
    std::optional<signal::AsrStream> asr_;
    signal::NormalizationStats stats_;
};

struct ClassifierOptions {
    int mc_passes = 20;
    std::uint64_t seed = 0;
    double hop_s = 0.1;
};

struct Classification {
    Eigen::VectorXd probs;
    Eigen::VectorXd stddev;
    double ts = 0.0; // stream time of the newest sample in the window
};

// Keeps the trailing feature window and classifies it every hop.
class OnlineClassifier {
public:
    OnlineClassifier(std::shared_ptr<const classify::ModelBundle> bundle, const ClassifierOptions& options);

    /// `start_ts` is the stream time of the first frame of `samples`.
    std::vector<Classification> push(const Eigen::MatrixXd& samples, double start_ts);

    /// Classifies one preprocessed window [channels x window_frames].
    Classification classify(const Eigen::MatrixXd& window, double ts);

    Eigen::Index window_frames() const noexcept { return window_frames_; }

private:
    std::shared_ptr<const classify::ModelBundle> bundle_;
    ClassifierOptions options_;
    features::MorletBank bank_;
    Eigen::Index window_frames_;
    Eigen::Index hop_frames_;
    Eigen::MatrixXd history_;
    Eigen::Index filled_ = 0;
    Eigen::Index since_last_ = 0;
    std::uint64_t ticks_ = 0;
};

} // namespace mibci::runtime
