#include "features/windowing.hpp"

#include "common/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace mibci::features {

std::size_t window_count(Eigen::Index frames, Eigen::Index window_frames, double stride_frames)
{
    if (window_frames > frames)
        return 0;
    return static_cast<std::size_t>(
               std::floor(static_cast<double>(frames - window_frames) / stride_frames + 1e-9))
        + 1;
}

signal::EpochSet window_epochs(const signal::EpochSet& epochs, const WindowConfig& config)
{
    require(config.window_s > 0 && config.stride_s > 0, ErrorCode::kParameter,
        "window and stride must be positive");
    const double fs = epochs.sample_rate_hz;
    const auto win = static_cast<Eigen::Index>(std::llround(config.window_s * fs));
    const double stride = config.stride_s * fs;
    require(win <= epochs.frames(), ErrorCode::kParameter, "window is longer than the epoch");

    signal::EpochSet out = epochs;
    out.epochs.clear();
    out.labels.clear();
    out.parent.clear();
    out.offset.clear();
    const std::size_t n = window_count(epochs.frames(), win, stride);
    for (std::size_t i = 0; i < epochs.size(); ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            const auto off = std::min<Eigen::Index>(
                static_cast<Eigen::Index>(std::llround(static_cast<double>(k) * stride)),
                epochs.frames() - win);
            out.epochs.push_back(epochs.epochs[i].middleCols(off, win));
            out.labels.push_back(epochs.labels[i]);
            out.parent.push_back(epochs.parent.empty() ? i : epochs.parent[i]);
            out.offset.push_back((epochs.offset.empty() ? 0 : epochs.offset[i]) + off);
        }
    }
    out.tmax = out.tmin + static_cast<double>(win) / fs;
    return out;
}

FeatureTensor FeatureTensor::subset(const std::vector<std::size_t>& rows) const
{
    FeatureTensor out;
    out.class_names = class_names;
    out.morlet_channels = morlet_channels;
    out.csp_channels = csp_channels;
    for (const auto r : rows) {
        out.sequences.push_back(sequences[r]);
        out.labels.push_back(labels[r]);
        out.parent.push_back(parent[r]);
        out.offset.push_back(offset[r]);
    }
    return out;
}

Eigen::MatrixXd stack_one(const Eigen::MatrixXd& morlet, const Eigen::VectorXd& csp)
{
    Eigen::MatrixXd out(morlet.rows() + csp.size(), morlet.cols());
    out.topRows(morlet.rows()) = morlet;
    if (csp.size() > 0)
        out.bottomRows(csp.size()) = csp.replicate(1, morlet.cols());
    return out;
}

FeatureTensor stack_features(const std::vector<Eigen::MatrixXd>& morlet,
    const Eigen::MatrixXd& csp_block, const signal::EpochSet& provenance)
{
    require(morlet.size() == provenance.size(), ErrorCode::kShape,
        "Morlet part and provenance disagree on window count");
    const bool with_csp = csp_block.cols() > 0;
    require(!with_csp || csp_block.rows() == static_cast<Eigen::Index>(morlet.size()),
        ErrorCode::kShape, "CSP block and Morlet part disagree on window count");

    FeatureTensor out;
    out.class_names = provenance.class_names;
    out.morlet_channels = morlet.empty() ? 0 : morlet.front().rows();
    out.csp_channels = csp_block.cols();
    for (std::size_t i = 0; i < morlet.size(); ++i) {
        const Eigen::VectorXd csp = with_csp
            ? Eigen::VectorXd(csp_block.row(static_cast<Eigen::Index>(i)).transpose())
            : Eigen::VectorXd();
        Eigen::MatrixXd seq = stack_one(morlet[i], csp);
        require(seq.allFinite(), ErrorCode::kNumeric, "non-finite feature value");
        out.sequences.push_back(std::move(seq));
        out.labels.push_back(provenance.labels[i]);
        out.parent.push_back(provenance.parent.empty() ? i : provenance.parent[i]);
        out.offset.push_back(provenance.offset.empty() ? 0 : provenance.offset[i]);
    }
    return out;
}

SplitIndices stratified_split(const std::vector<int>& labels,
    const std::vector<std::size_t>& parents, double ratio, std::uint64_t seed)
{
    require(labels.size() == parents.size(), ErrorCode::kShape, "labels and parents differ in size");
    require(ratio > 0.0 && ratio < 1.0, ErrorCode::kParameter,
        "split ratio must lie strictly between 0 and 1");

    std::map<int, std::vector<std::size_t>> parents_by_class;
    std::map<int, std::size_t> windows_by_class;
    std::map<std::size_t, int> parent_label;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto [it, inserted] = parent_label.emplace(parents[i], labels[i]);
        require(it->second == labels[i], ErrorCode::kData, "windows of one epoch carry different labels");
        if (inserted)
            parents_by_class[labels[i]].push_back(parents[i]);
        ++windows_by_class[labels[i]];
    }
    for (const auto& [cls, count] : windows_by_class)
        require(count >= 5, ErrorCode::kParameter,
            "class " + std::to_string(cls) + " has fewer than 5 windows");

    // Largest-remainder allocation of train parents per class.
    std::size_t total_parents = 0;
    for (const auto& [cls, ps] : parents_by_class)
        total_parents += ps.size();
    const auto target_total = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(total_parents)));
    std::map<int, std::size_t> n_train;
    std::vector<std::pair<double, int>> remainders;
    std::size_t assigned = 0;
    for (const auto& [cls, ps] : parents_by_class) {
        const double exact = ratio * static_cast<double>(ps.size());
        n_train[cls] = static_cast<std::size_t>(std::floor(exact));
        assigned += n_train[cls];
        remainders.emplace_back(exact - std::floor(exact), cls);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
        [](const auto& a, const auto& b) { return a.first > b.first; });
    for (const auto& [rem, cls] : remainders) {
        if (assigned >= target_total)
            break;
        if (n_train[cls] < parents_by_class[cls].size()) {
            ++n_train[cls];
            ++assigned;
        }
    }

    std::mt19937_64 rng(seed);
    std::set<std::size_t> train_parents;
    for (auto& [cls, ps] : parents_by_class) {
        std::sort(ps.begin(), ps.end());
        // Fisher-Yates with an explicit draw so the order is library-independent.
        for (std::size_t i = ps.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng() % i);
            std::swap(ps[i - 1], ps[j]);
        }
        std::size_t take = n_train[cls];
        if (take == ps.size())
            --take;
        if (take == 0)
            take = 1;
        train_parents.insert(ps.begin(), ps.begin() + static_cast<std::ptrdiff_t>(take));
    }

    SplitIndices split;
    for (std::size_t i = 0; i < labels.size(); ++i)
        (train_parents.count(parents[i]) ? split.train : split.test).push_back(i);
    require(!split.train.empty() && !split.test.empty(), ErrorCode::kParameter,
        "split leaves one side empty");
    return split;
}

SplitIndices stratified_split(const FeatureTensor& tensor, double ratio, std::uint64_t seed)
{
    return stratified_split(tensor.labels, tensor.parent, ratio, seed);
}

} // namespace mibci::features
