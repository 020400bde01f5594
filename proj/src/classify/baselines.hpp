#pragma once

#include "features/windowing.hpp"

#include <string>

namespace mibci::classify {

enum class BaselineKind { kKnn, kLinear };

std::string to_string(BaselineKind kind);
BaselineKind parse_baseline_kind(const std::string& name);

struct BaselineOptions {
    int k = 5;
    double l2 = 1e-3;
    int iterations = 500;
    double learning_rate = 0.05;
};

struct BaselineModel {
    BaselineKind kind = BaselineKind::kKnn;
    int n_classes = 3;
    BaselineOptions options;
    // kNN memory
    Eigen::MatrixXd train_x; // [n x dims]
    std::vector<int> train_y;
    // softmax regression on standardized inputs
    Eigen::VectorXd mean, scale;
    Eigen::MatrixXd weights; // [classes x dims]
    Eigen::VectorXd bias;
};

/// Time-pooled feature vectors [n x feature_channels].
Eigen::MatrixXd pool_features(const features::FeatureTensor& set);
Eigen::VectorXd pool_one(const Eigen::MatrixXd& sequence);

BaselineModel baseline_fit(BaselineKind kind, const Eigen::MatrixXd& features,
    const std::vector<int>& labels, int n_classes, const BaselineOptions& options = {});

Eigen::VectorXd baseline_probs(const BaselineModel& model, const Eigen::VectorXd& x);
std::vector<int> baseline_predict(const BaselineModel& model, const Eigen::MatrixXd& features);

} // namespace mibci::classify
