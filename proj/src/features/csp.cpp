#include "features/csp.hpp"

#include "common/error.hpp"

#include <cmath>

namespace mibci::features {

namespace {

constexpr double kVarianceFloor = 1e-20;

Eigen::MatrixXd epoch_covariance(const Eigen::MatrixXd& x)
{
    const Eigen::MatrixXd centered = x.colwise() - x.rowwise().mean();
    return centered * centered.transpose() / static_cast<double>(x.cols());
}

} // namespace

CspModel csp_fit(const signal::EpochSet& epochs, int n_components)
{
    require(n_components >= 2 && n_components % 2 == 0, ErrorCode::kParameter,
        "CSP component count must be even and >= 2");
    const auto n_classes = epochs.class_names.size();
    const auto n_ch = epochs.channels();
    require(n_components <= n_ch, ErrorCode::kParameter, "more CSP components than channels");

    std::vector<Eigen::MatrixXd> cov_sum(n_classes, Eigen::MatrixXd::Zero(n_ch, n_ch));
    std::vector<int> counts(n_classes, 0);
    for (std::size_t i = 0; i < epochs.size(); ++i) {
        const auto c = static_cast<std::size_t>(epochs.labels[i]);
        cov_sum[c] += epoch_covariance(epochs.epochs[i]);
        ++counts[c];
    }
    int present = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (counts[c] == 0)
            continue;
        require(counts[c] >= 2, ErrorCode::kParameter,
            "class " + epochs.class_names[c] + " needs at least two epochs for CSP");
        ++present;
    }
    require(present >= 2, ErrorCode::kParameter, "CSP needs at least two classes");

    CspModel model;
    model.class_names = epochs.class_names;
    model.n_components = n_components;
    const int half = n_components / 2;
    for (std::size_t c = 0; c < n_classes; ++c) {
        require(counts[c] > 0, ErrorCode::kParameter,
            "class " + epochs.class_names[c] + " has no epochs");
        const Eigen::MatrixXd sigma_c = cov_sum[c] / counts[c];
        Eigen::MatrixXd rest = Eigen::MatrixXd::Zero(n_ch, n_ch);
        int rest_n = 0;
        for (std::size_t o = 0; o < n_classes; ++o) {
            if (o == c)
                continue;
            rest += cov_sum[o];
            rest_n += counts[o];
        }
        const Eigen::MatrixXd sigma_rest = rest / rest_n;
        const Eigen::MatrixXd composite = sigma_c + sigma_rest;

        Eigen::LLT<Eigen::MatrixXd> llt(composite);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> check(composite, Eigen::EigenvaluesOnly);
        require(llt.info() == Eigen::Success
                && check.eigenvalues().minCoeff() > 1e-12 * check.eigenvalues().maxCoeff(),
            ErrorCode::kFit,
            "composite covariance is singular; reject more channels (CSP is unregularized)");

        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(sigma_c, composite);
        require(ges.info() == Eigen::Success, ErrorCode::kFit, "CSP eigensolver failed");
        const Eigen::MatrixXd& vecs = ges.eigenvectors();
        const Eigen::VectorXd& vals = ges.eigenvalues();

        Eigen::MatrixXd w(n_ch, n_components);
        Eigen::VectorXd lam(n_components);
        for (int k = 0; k < half; ++k) {
            w.col(k) = vecs.col(n_ch - 1 - k);
            lam(k) = vals(n_ch - 1 - k);
            w.col(half + k) = vecs.col(k);
            lam(half + k) = vals(k);
        }
        // Sign convention: largest-magnitude weight positive.
        for (int k = 0; k < n_components; ++k) {
            Eigen::Index arg = 0;
            w.col(k).cwiseAbs().maxCoeff(&arg);
            if (w(arg, k) < 0)
                w.col(k) = -w.col(k);
        }
        model.filters.push_back(std::move(w));
        model.eigenvalues.push_back(std::move(lam));
        model.class_cov.push_back(sigma_c);
        model.rest_cov.push_back(sigma_rest);
    }
    return model;
}

Eigen::VectorXd csp_transform_one(
    const CspModel& model, const Eigen::MatrixXd& segment, std::size_t* flagged)
{
    require(segment.rows() == model.channels(), ErrorCode::kShape,
        "segment has " + std::to_string(segment.rows()) + " channels, CSP was fit on "
            + std::to_string(model.channels()));
    Eigen::VectorXd out(model.feature_count());
    Eigen::Index k = 0;
    for (const auto& w : model.filters) {
        const Eigen::MatrixXd y = w.transpose() * segment;
        for (Eigen::Index j = 0; j < y.rows(); ++j) {
            const double mean = y.row(j).mean();
            double var = (y.row(j).array() - mean).square().mean();
            if (!(var > kVarianceFloor)) {
                var = kVarianceFloor;
                if (flagged)
                    ++*flagged;
            }
            out(k++) = std::log(var);
        }
    }
    return out;
}

CspFeatures csp_transform(const CspModel& model, const signal::EpochSet& epochs)
{
    CspFeatures out;
    out.values.resize(static_cast<Eigen::Index>(epochs.size()), model.feature_count());
    for (std::size_t i = 0; i < epochs.size(); ++i)
        out.values.row(static_cast<Eigen::Index>(i))
            = csp_transform_one(model, epochs.epochs[i], &out.flagged).transpose();
    return out;
}

} // namespace mibci::features
