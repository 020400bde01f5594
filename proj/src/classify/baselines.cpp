#include "classify/baselines.hpp"

#include "classify/s4d_forward.hpp"
#include "common/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mibci::classify {

std::string to_string(BaselineKind kind)
{
    return kind == BaselineKind::kKnn ? "knn" : "linear";
}

BaselineKind parse_baseline_kind(const std::string& name)
{
    if (name == "knn")
        return BaselineKind::kKnn;
    if (name == "linear")
        return BaselineKind::kLinear;
    fail(ErrorCode::kParameter, "unknown baseline '" + name + "'");
}

Eigen::VectorXd pool_one(const Eigen::MatrixXd& sequence)
{
    return sequence.rowwise().mean();
}

Eigen::MatrixXd pool_features(const features::FeatureTensor& set)
{
    Eigen::MatrixXd out(static_cast<Eigen::Index>(set.size()), set.feature_channels());
    for (std::size_t i = 0; i < set.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = pool_one(set.sequences[i]).transpose();
    return out;
}

BaselineModel baseline_fit(BaselineKind kind, const Eigen::MatrixXd& x,
    const std::vector<int>& labels, int n_classes, const BaselineOptions& options)
{
    require(x.rows() > 0 && static_cast<std::size_t>(x.rows()) == labels.size(), ErrorCode::kShape,
        "baseline features and labels disagree");
    BaselineModel model;
    model.kind = kind;
    model.n_classes = n_classes;
    model.options = options;
    if (kind == BaselineKind::kKnn) {
        require(options.k >= 1 && options.k <= x.rows(), ErrorCode::kParameter,
            "k = " + std::to_string(options.k) + " exceeds the training set size");
        model.train_x = x;
        model.train_y = labels;
        return model;
    }

    model.mean = x.colwise().mean().transpose();
    model.scale = ((x.rowwise() - model.mean.transpose()).array().square().colwise().mean().sqrt())
                      .transpose()
                      .unaryExpr([](double s) { return s > 1e-12 ? s : 1.0; });
    const Eigen::MatrixXd z
        = ((x.rowwise() - model.mean.transpose()).array().rowwise() / model.scale.transpose().array()).matrix();
    const auto n = static_cast<double>(x.rows());
    const Eigen::Index dims = x.cols();
    model.weights = Eigen::MatrixXd::Zero(n_classes, dims);
    model.bias = Eigen::VectorXd::Zero(n_classes);
    Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(x.rows(), n_classes);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        onehot(i, labels[static_cast<std::size_t>(i)]) = 1.0;

    // Full-batch Adam on L2-regularized softmax cross-entropy.
    Eigen::MatrixXd mw = Eigen::MatrixXd::Zero(n_classes, dims), vw = mw;
    Eigen::VectorXd mb = Eigen::VectorXd::Zero(n_classes), vb = mb;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int it = 1; it <= options.iterations; ++it) {
        Eigen::MatrixXd logits = z * model.weights.transpose();
        logits.rowwise() += model.bias.transpose();
        for (Eigen::Index i = 0; i < logits.rows(); ++i)
            logits.row(i) = softmax(logits.row(i).transpose()).transpose();
        const Eigen::MatrixXd diff = (logits - onehot) / n;
        const Eigen::MatrixXd gw = diff.transpose() * z + options.l2 * model.weights;
        const Eigen::VectorXd gb = diff.colwise().sum().transpose();
        const double c1 = 1.0 - std::pow(b1, it), c2 = 1.0 - std::pow(b2, it);
        mw = b1 * mw + (1 - b1) * gw;
        vw = b2 * vw + (1 - b2) * gw.cwiseProduct(gw);
        mb = b1 * mb + (1 - b1) * gb;
        vb = b2 * vb + (1 - b2) * gb.cwiseProduct(gb);
        model.weights.array() -= options.learning_rate * (mw.array() / c1) / ((vw.array() / c2).sqrt() + eps);
        model.bias.array() -= options.learning_rate * (mb.array() / c1) / ((vb.array() / c2).sqrt() + eps);
    }
    return model;
}

Eigen::VectorXd baseline_probs(const BaselineModel& model, const Eigen::VectorXd& x)
{
    if (model.kind == BaselineKind::kLinear) {
        require(x.size() == model.weights.cols(), ErrorCode::kShape, "baseline input width mismatch");
        const Eigen::VectorXd z = (x - model.mean).cwiseQuotient(model.scale);
        return softmax(model.weights * z + model.bias);
    }
    require(x.size() == model.train_x.cols(), ErrorCode::kShape, "baseline input width mismatch");
    const Eigen::VectorXd dist = (model.train_x.rowwise() - x.transpose()).rowwise().squaredNorm();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(dist.size()));
    std::iota(idx.begin(), idx.end(), 0);
    const auto k = static_cast<std::size_t>(model.options.k);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
        [&](Eigen::Index a, Eigen::Index b) { return dist(a) < dist(b) || (dist(a) == dist(b) && a < b); });
    Eigen::VectorXd votes = Eigen::VectorXd::Zero(model.n_classes);
    for (std::size_t i = 0; i < k; ++i)
        votes(model.train_y[static_cast<std::size_t>(idx[i])]) += 1.0;
    return votes / static_cast<double>(k);
}

std::vector<int> baseline_predict(const BaselineModel& model, const Eigen::MatrixXd& features)
{
    std::vector<int> out;
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        Eigen::Index arg = 0;
        baseline_probs(model, features.row(i).transpose()).maxCoeff(&arg);
        out.push_back(static_cast<int>(arg));
    }
    return out;
}

} // namespace mibci::classify
