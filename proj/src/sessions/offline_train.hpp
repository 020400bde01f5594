#pragma once

#include "classify/bundle.hpp"
#include "classify/evaluate.hpp"
#include "classify/s4d_train.hpp"
#include "signal/preprocess.hpp"

#include <nlohmann/json.hpp>
#include <filesystem>
#include <iosfwd>

namespace mibci::sessions {

struct TrainOptions {
    std::vector<std::filesystem::path> recordings;
    std::filesystem::path calibration;
    std::filesystem::path mapping;
    /// Bundle and report destinations; empty paths skip writing.
    std::filesystem::path output;
    std::filesystem::path report;

    std::uint64_t seed = 0;
    double crop_s = 10.0;
    signal::BandpassDesign filter;
    signal::RejectionCriteria rejection;
    signal::AsrConfig asr;
    signal::EpochConfig epoch;
    classify::FeatureConfig features;
    /// Fraction of parent epochs kept for training; the rest is the test set.
    double split_ratio = 0.8;
    /// Fraction of training parents held back for early stopping.
    double val_fraction = 0.15;
    /// "s4d", "knn" or "linear".
    std::string classifier = "s4d";
    classify::S4dConfig model;
    classify::TrainConfig train;
    classify::BaselineOptions baseline;

    /// Overlays the keys present in `j` on the defaults.
    static TrainOptions from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct TrainOutcome {
    classify::ModelBundle bundle;
    classify::EvalResult evaluation;
    nlohmann::json report;
    std::size_t train_windows = 0;
    std::size_t val_windows = 0;
    std::size_t test_windows = 0;
};

// Full offline chain: crop, bandpass, channel rejection, ASR (calibrated on the
// calibration recording), CAR, epoching, split by epoch, normalization, CSP,
// windowing, Morlet power, classifier training and test evaluation. Errors
// carry the stage name and the file involved. `log` receives progress lines.
TrainOutcome cli_train(const TrainOptions& options, std::ostream* log = nullptr);

} // namespace mibci::sessions
