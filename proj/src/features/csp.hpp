#pragma once

#include "signal/preprocess.hpp"

#include <vector>

namespace mibci::features {

// One-vs-rest common spatial patterns. For class c the filters solve
// Sigma_c w = lambda (Sigma_c + Sigma_rest) w; the n/2 largest and n/2
// smallest eigenvalue directions are kept, largest first.
struct CspModel {
    std::vector<std::string> class_names;
    int n_components = 4;
    std::vector<Eigen::MatrixXd> filters;      // per class [channels x n_components]
    std::vector<Eigen::VectorXd> eigenvalues;  // per class, matching filter columns
    std::vector<Eigen::MatrixXd> class_cov;    // Sigma_c
    std::vector<Eigen::MatrixXd> rest_cov;     // Sigma_rest

    Eigen::Index channels() const { return filters.empty() ? 0 : filters.front().rows(); }
    Eigen::Index feature_count() const
    {
        return static_cast<Eigen::Index>(filters.size()) * n_components;
    }
};

CspModel csp_fit(const signal::EpochSet& epochs, int n_components = 4);

struct CspFeatures {
    Eigen::MatrixXd values; // [n_epochs x n_features]
    std::size_t flagged = 0;
};

/// Log-variance of each spatially filtered signal, no regularization.
CspFeatures csp_transform(const CspModel& model, const signal::EpochSet& epochs);
Eigen::VectorXd csp_transform_one(const CspModel& model, const Eigen::MatrixXd& segment,
    std::size_t* flagged = nullptr);

} // namespace mibci::features
