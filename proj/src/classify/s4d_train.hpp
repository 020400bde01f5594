#pragma once

#include "classify/s4d_forward.hpp"
#include "common/error.hpp"
#include "features/windowing.hpp"

#include <nlohmann/json.hpp>

namespace mibci::classify {

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 32;
    int max_epochs = 100;
    int patience = 10;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
};

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainingReport {
    std::vector<EpochMetrics> epochs;
    int best_epoch = -1;
    bool early_stopped = false;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
};

class TrainingDiverged : public Error {
public:
    TrainingDiverged(const std::string& message, S4dModel last_good)
        : Error(ErrorCode::kTraining, message)
        , last_good_(std::move(last_good))
    {
    }

    const S4dModel& last_good() const noexcept { return last_good_; }

private:
    S4dModel last_good_;
};

struct BatchResult {
    double loss = 0.0; // mean cross-entropy
    int correct = 0;
};

/// Mean cross-entropy over the batch; `grad` receives d(loss)/d(params).
BatchResult loss_and_gradient(const S4dModel& model, const std::vector<const Eigen::MatrixXd*>& batch,
    const std::vector<int>& labels, std::vector<double>& grad, std::uint64_t dropout_seed,
    bool dropout_active);

/// Loss only, with the same dropout draws as loss_and_gradient for equal seeds.
double batch_loss(const S4dModel& model, const std::vector<const Eigen::MatrixXd*>& batch,
    const std::vector<int>& labels, std::uint64_t dropout_seed, bool dropout_active);

struct TrainResult {
    S4dModel model;
    TrainingReport report;
};

TrainResult train(S4dModel model, const features::FeatureTensor& train_set,
    const features::FeatureTensor& val_set, const TrainConfig& config);

struct PredictionWithConfidence {
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;
    int label = 0;
};

PredictionWithConfidence mc_dropout_predict(
    const S4dModel& model, const Eigen::MatrixXd& input, int n_passes = 20, std::uint64_t seed = 0);

} // namespace mibci::classify
