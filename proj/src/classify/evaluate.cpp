#include "classify/evaluate.hpp"

#include "classify/s4d_forward.hpp"
#include "common/error.hpp"

#include <iomanip>
#include <map>
#include <sstream>

namespace mibci::classify {

EvalResult evaluate_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
    const std::vector<std::size_t>& parents, int n_classes)
{
    require(!truth.empty(), ErrorCode::kParameter, "cannot evaluate an empty test set");
    require(truth.size() == predicted.size(), ErrorCode::kShape, "prediction count mismatch");
    EvalResult r;
    r.confusion = Eigen::MatrixXi::Zero(n_classes, n_classes);
    for (std::size_t i = 0; i < truth.size(); ++i)
        ++r.confusion(truth[i], predicted[i]);
    r.accuracy = static_cast<double>(r.confusion.trace()) / static_cast<double>(truth.size());
    for (int c = 0; c < n_classes; ++c) {
        const int row = r.confusion.row(c).sum();
        r.recall.push_back(row > 0 ? static_cast<double>(r.confusion(c, c)) / row : 0.0);
    }

    if (parents.size() == truth.size()) {
        std::map<std::size_t, std::vector<int>> votes;
        std::map<std::size_t, int> parent_truth;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            auto& v = votes[parents[i]];
            v.resize(static_cast<std::size_t>(n_classes), 0);
            ++v[static_cast<std::size_t>(predicted[i])];
            parent_truth[parents[i]] = truth[i];
        }
        int correct = 0;
        for (const auto& [p, v] : votes) {
            const auto winner = std::max_element(v.begin(), v.end()) - v.begin();
            if (winner == parent_truth[p])
                ++correct;
        }
        r.trial_accuracy = static_cast<double>(correct) / static_cast<double>(votes.size());
    }
    return r;
}

nlohmann::json EvalResult::to_json(const std::vector<std::string>& class_names) const
{
    nlohmann::json j;
    j["classes"] = class_names;
    j["confusion"] = nlohmann::json::array();
    for (Eigen::Index r = 0; r < confusion.rows(); ++r) {
        std::vector<int> row;
        for (Eigen::Index c = 0; c < confusion.cols(); ++c)
            row.push_back(confusion(r, c));
        j["confusion"].push_back(row);
    }
    j["accuracy"] = accuracy;
    j["recall"] = recall;
    j["trial_accuracy"] = trial_accuracy;
    return j;
}

std::string EvalResult::table(const std::vector<std::string>& class_names) const
{
    std::ostringstream os;
    os << std::setw(12) << "true\\pred";
    for (const auto& n : class_names)
        os << std::setw(10) << n;
    os << std::setw(10) << "recall" << '\n';
    for (Eigen::Index r = 0; r < confusion.rows(); ++r) {
        os << std::setw(12) << class_names[static_cast<std::size_t>(r)];
        for (Eigen::Index c = 0; c < confusion.cols(); ++c)
            os << std::setw(10) << confusion(r, c);
        os << std::setw(10) << std::fixed << std::setprecision(3) << recall[static_cast<std::size_t>(r)]
           << '\n';
    }
    os << "window accuracy " << std::fixed << std::setprecision(3) << accuracy
       << ", trial (majority vote) accuracy " << trial_accuracy << '\n';
    return os.str();
}

std::vector<int> predict_labels(const S4dModel& model, const features::FeatureTensor& set)
{
    std::vector<int> out;
    if (set.size() == 0)
        return out;
    const KernelSet kernels = compute_kernels(model, set.steps());
    for (const auto& seq : set.sequences) {
        Eigen::Index arg = 0;
        forward_conv_one(model, kernels, seq).maxCoeff(&arg);
        out.push_back(static_cast<int>(arg));
    }
    return out;
}

EvalResult evaluate(const S4dModel& model, const features::FeatureTensor& test_set)
{
    require(test_set.size() > 0, ErrorCode::kParameter, "cannot evaluate an empty test set");
    return evaluate_predictions(
        test_set.labels, predict_labels(model, test_set), test_set.parent, model.config().n_classes);
}

} // namespace mibci::classify
