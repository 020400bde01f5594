#include "signal/preprocess.hpp"

#include "common/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace mibci::signal {

Recording crop_head(const Recording& recording, double seconds)
{
    require(seconds >= 0, ErrorCode::kParameter, "crop length must be non-negative");
    const double fs = recording.montage.sample_rate_hz;
    const auto cut = static_cast<Eigen::Index>(std::llround(seconds * fs));
    require(cut < recording.frames(), ErrorCode::kLength,
        "recording of " + std::to_string(recording.duration_s()) + " s is not longer than crop "
            + std::to_string(seconds) + " s");
    if (cut == 0)
        return recording;

    Recording out;
    out.montage = recording.montage;
    out.session_id = recording.session_id;
    out.samples = recording.samples.rightCols(recording.frames() - cut);
    const double shift = static_cast<double>(cut) / fs;
    for (const auto& m : recording.markers)
        if (m.timestamp >= shift)
            out.markers.push_back({m.timestamp - shift, m.label});
    return out;
}

Recording select_channels(const Recording& recording, const std::vector<std::string>& labels)
{
    Recording out;
    out.montage = recording.montage;
    out.montage.channel_names = labels;
    out.session_id = recording.session_id;
    out.markers = recording.markers;
    out.samples.resize(static_cast<Eigen::Index>(labels.size()), recording.frames());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto idx = recording.montage.index_of(labels[i]);
        require(idx.has_value(), ErrorCode::kShape, "channel " + labels[i] + " not in recording");
        out.samples.row(static_cast<Eigen::Index>(i))
            = recording.samples.row(static_cast<Eigen::Index>(*idx));
    }
    return out;
}

namespace {

double median_of(std::vector<double> values)
{
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
    std::nth_element(values.begin(), mid, values.end());
    double m = *mid;
    if (values.size() % 2 == 0) {
        const double lower = *std::max_element(values.begin(), mid);
        m = 0.5 * (m + lower);
    }
    return m;
}

Eigen::Index longest_constant_run(const Eigen::RowVectorXd& row)
{
    Eigen::Index best = row.size() > 0 ? 1 : 0;
    Eigen::Index run = 1;
    for (Eigen::Index t = 1; t < row.size(); ++t) {
        run = (row(t) == row(t - 1)) ? run + 1 : 1;
        best = std::max(best, run);
    }
    return best;
}

} // namespace

RejectionResult reject_channels(const Recording& recording, const RejectionCriteria& criteria)
{
    const auto n_ch = recording.samples.rows();
    require(n_ch >= 2, ErrorCode::kParameter, "channel rejection needs at least two channels");
    const double fs = recording.montage.sample_rate_hz;

    std::vector<double> stds(static_cast<std::size_t>(n_ch));
    for (Eigen::Index c = 0; c < n_ch; ++c) {
        const Eigen::RowVectorXd row = recording.samples.row(c);
        const double mean = row.mean();
        stds[static_cast<std::size_t>(c)]
            = std::sqrt((row.array() - mean).square().mean());
    }
    const double med = median_of(stds);
    std::vector<double> deviations;
    for (double s : stds)
        deviations.push_back(std::abs(s - med));
    const double scale = std::max(1.4826 * median_of(deviations), 0.1 * med);

    RejectionResult result;
    std::vector<std::string> kept;
    for (Eigen::Index c = 0; c < n_ch; ++c) {
        const auto& label = recording.montage.channel_names[static_cast<std::size_t>(c)];
        const Eigen::RowVectorXd row = recording.samples.row(c);
        std::string reason;
        if (static_cast<double>(longest_constant_run(row)) / fs > criteria.flatline_s)
            reason = "flatline";
        else if (row.cwiseAbs().maxCoeff() > criteria.spike_uv)
            reason = "spike";
        else if (scale > 0 && (stds[static_cast<std::size_t>(c)] - med) / scale > criteria.noise_z)
            reason = "noise";
        if (reason.empty())
            kept.push_back(label);
        else
            result.rejected.push_back({label, reason});
    }
    require(!kept.empty(), ErrorCode::kDataQuality, "every channel was rejected");
    result.recording = select_channels(recording, kept);
    return result;
}

Eigen::MatrixXd common_average_reference(
    const Eigen::MatrixXd& samples, const std::vector<std::size_t>& included)
{
    require(!included.empty(), ErrorCode::kParameter, "common average needs included channels");
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(samples.cols());
    for (const auto c : included) {
        require(static_cast<Eigen::Index>(c) < samples.rows(), ErrorCode::kParameter,
            "included channel out of range");
        mean += samples.row(static_cast<Eigen::Index>(c));
    }
    mean /= static_cast<double>(included.size());
    return samples.rowwise() - mean;
}

SampleChunk common_average_reference(
    const SampleChunk& chunk, const std::vector<std::size_t>& included)
{
    SampleChunk out = chunk;
    out.samples = common_average_reference(chunk.samples, included);
    return out;
}

std::vector<std::string> class_names_of(const ClassMapping& mapping)
{
    std::set<std::string> names;
    for (const auto& [label, cls] : mapping)
        names.insert(cls);
    return {names.begin(), names.end()};
}

EpochSet epoch_and_baseline(
    const Recording& recording, const ClassMapping& mapping, const EpochConfig& config)
{
    require(config.tmin < config.tmax, ErrorCode::kParameter, "epoch tmin must be below tmax");
    require(config.baseline_start <= config.baseline_end, ErrorCode::kParameter,
        "baseline interval is reversed");
    require(!recording.markers.empty(), ErrorCode::kData, "recording has no markers");

    const double fs = recording.montage.sample_rate_hz;
    EpochSet set;
    set.class_names = class_names_of(mapping);
    set.channel_names = recording.montage.channel_names;
    set.sample_rate_hz = fs;
    set.tmin = config.tmin;
    set.tmax = config.tmax;
    set.baseline_start = config.baseline_start;
    set.baseline_end = config.baseline_end;

    const auto n_frames = static_cast<Eigen::Index>(std::llround((config.tmax - config.tmin) * fs));
    const bool use_baseline = config.baseline_end > config.baseline_start;

    for (const auto& marker : recording.markers) {
        const auto it = mapping.find(marker.label);
        if (it == mapping.end())
            continue;
        const auto start = static_cast<Eigen::Index>(std::llround((marker.timestamp + config.tmin) * fs));
        Eigen::Index b0 = start, b1 = start;
        if (use_baseline) {
            b0 = static_cast<Eigen::Index>(std::llround((marker.timestamp + config.baseline_start) * fs));
            b1 = static_cast<Eigen::Index>(std::llround((marker.timestamp + config.baseline_end) * fs));
        }
        if (start < 0 || start + n_frames > recording.frames() || b0 < 0 || b1 > recording.frames()) {
            ++set.skipped;
            continue;
        }
        Eigen::MatrixXd epoch = recording.samples.middleCols(start, n_frames);
        if (use_baseline && b1 > b0) {
            const Eigen::VectorXd base = recording.samples.middleCols(b0, b1 - b0).rowwise().mean();
            epoch.colwise() -= base;
        }
        const auto cls = std::find(set.class_names.begin(), set.class_names.end(), it->second);
        set.labels.push_back(static_cast<int>(cls - set.class_names.begin()));
        set.parent.push_back(set.epochs.size());
        set.offset.push_back(0);
        set.epochs.push_back(std::move(epoch));
    }
    require(!set.epochs.empty(), ErrorCode::kData,
        "no epochs extracted (" + std::to_string(set.skipped) + " cues too close to the edges)");
    return set;
}

NormalizeResult normalize_epochs(
    const EpochSet& epochs, const std::optional<NormalizationStats>& stats)
{
    require(!epochs.epochs.empty(), ErrorCode::kData, "cannot normalize an empty epoch set");
    const auto n_ch = epochs.channels();
    NormalizationStats fitted;
    if (stats) {
        require(static_cast<Eigen::Index>(stats->mean.size()) == n_ch
                && static_cast<Eigen::Index>(stats->stddev.size()) == n_ch,
            ErrorCode::kShape, "normalization stats do not match channel count");
        fitted = *stats;
    } else {
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(n_ch);
        Eigen::VectorXd sq = Eigen::VectorXd::Zero(n_ch);
        double count = 0;
        for (const auto& e : epochs.epochs) {
            sum += e.rowwise().sum();
            count += static_cast<double>(e.cols());
        }
        const Eigen::VectorXd mean = sum / count;
        for (const auto& e : epochs.epochs)
            sq += (e.colwise() - mean).array().square().matrix().rowwise().sum();
        fitted.mean.assign(mean.data(), mean.data() + n_ch);
        for (Eigen::Index c = 0; c < n_ch; ++c) {
            double sd = std::sqrt(sq(c) / count);
            if (!(sd > 1e-12)) {
                sd = 1.0;
                fitted.flagged.push_back(static_cast<std::size_t>(c));
            }
            fitted.stddev.push_back(sd);
        }
    }

    NormalizeResult result{epochs, fitted};
    for (auto& e : result.epochs.epochs)
        apply_normalization(e, fitted);
    result.epochs.normalization = fitted;
    return result;
}

void apply_normalization(Eigen::MatrixXd& samples, const NormalizationStats& stats)
{
    require(static_cast<Eigen::Index>(stats.mean.size()) == samples.rows(), ErrorCode::kShape,
        "normalization stats do not match channel count");
    for (Eigen::Index c = 0; c < samples.rows(); ++c) {
        const auto i = static_cast<std::size_t>(c);
        samples.row(c) = (samples.row(c).array() - stats.mean[i]) / stats.stddev[i];
    }
}

} // namespace mibci::signal
