#pragma once

#include "classify/s4d_model.hpp"
#include "features/windowing.hpp"

#include <nlohmann/json.hpp>

namespace mibci::classify {

struct EvalResult {
    Eigen::MatrixXi confusion; // rows = true class, cols = predicted
    double accuracy = 0.0;
    std::vector<double> recall;
    /// Majority vote over the windows of each parent epoch.
    double trial_accuracy = 0.0;

    nlohmann::json to_json(const std::vector<std::string>& class_names) const;
    std::string table(const std::vector<std::string>& class_names) const;
};

EvalResult evaluate_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
    const std::vector<std::size_t>& parents, int n_classes);

std::vector<int> predict_labels(const S4dModel& model, const features::FeatureTensor& set);

EvalResult evaluate(const S4dModel& model, const features::FeatureTensor& test_set);

} // namespace mibci::classify
