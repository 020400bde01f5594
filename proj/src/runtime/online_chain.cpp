#include "runtime/online_chain.hpp"

#include "classify/baselines.hpp"
#include "common/error.hpp"
#include "features/csp.hpp"
#include "features/windowing.hpp"
#include "signal/preprocess.hpp"

#include <cmath>

namespace mibci::runtime {

Preprocessor::Preprocessor(const classify::ModelBundle& bundle, const signal::Montage& source)
    : filter_(signal::design_bandpass(bundle.filter, std::max<std::size_t>(bundle.channel_names.size(), 1)))
    , stats_(bundle.normalization)
{
    require(!bundle.channel_names.empty(), ErrorCode::kStartup, "model bundle lists no channels");
    require(std::abs(source.sample_rate_hz - bundle.sample_rate_hz) < 1e-9, ErrorCode::kStartup,
        "source runs at " + std::to_string(source.sample_rate_hz) + " Hz but the model expects "
            + std::to_string(bundle.sample_rate_hz) + " Hz");
    for (const auto& name : bundle.channel_names) {
        const auto idx = source.index_of(name);
        require(idx.has_value(), ErrorCode::kStartup,
            "source montage lacks model channel '" + name + "'");
        rows_.push_back(static_cast<Eigen::Index>(*idx));
        car_channels_.push_back(car_channels_.size());
    }
    require(stats_.mean.size() == rows_.size() && stats_.stddev.size() == rows_.size(), ErrorCode::kStartup,
        "normalization stats do not match the model channels");
    if (bundle.asr) {
        require(bundle.asr->channels() == static_cast<Eigen::Index>(rows_.size()), ErrorCode::kStartup,
            "ASR model does not match the model channels");
        asr_.emplace(*bundle.asr);
    }
}

Eigen::MatrixXd Preprocessor::process(const Eigen::MatrixXd& raw)
{
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows_.size()), raw.cols());
    for (std::size_t i = 0; i < rows_.size(); ++i)
        x.row(static_cast<Eigen::Index>(i)) = raw.row(rows_[i]);
    filter_.process(x);
    if (asr_)
        asr_->process(x);
    x = signal::common_average_reference(x, car_channels_);
    signal::apply_normalization(x, stats_);
    return x;
}

OnlineClassifier::OnlineClassifier(
    std::shared_ptr<const classify::ModelBundle> bundle, const ClassifierOptions& options)
    : bundle_(std::move(bundle))
    , options_(options)
    , bank_(bundle_->features.morlet, bundle_->sample_rate_hz)
{
    const double fs = bundle_->sample_rate_hz;
    window_frames_ = static_cast<Eigen::Index>(std::llround(bundle_->features.window.window_s * fs));
    hop_frames_ = static_cast<Eigen::Index>(std::llround(options.hop_s * fs));
    require(window_frames_ > 0 && hop_frames_ > 0, ErrorCode::kStartup, "window and hop must be positive");
    require(bundle_->s4d || bundle_->baseline, ErrorCode::kStartup, "model bundle holds no classifier");
    if (bundle_->s4d)
        require(options.mc_passes >= 2, ErrorCode::kStartup, "MC dropout needs at least two passes");
    history_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(bundle_->channel_names.size()), window_frames_);
}

Classification OnlineClassifier::classify(const Eigen::MatrixXd& window, double ts)
{
    const Eigen::MatrixXd morlet = bank_.power(window);
    Eigen::VectorXd csp;
    if (bundle_->features.use_csp)
        csp = features::csp_transform_one(*bundle_->csp, window);
    const Eigen::MatrixXd x = features::stack_one(morlet, csp);

    Classification out;
    out.ts = ts;
    if (bundle_->s4d) {
        const auto pred = classify::mc_dropout_predict(
            *bundle_->s4d, x, options_.mc_passes, options_.seed + 0x9E3779B97F4A7C15ULL * ++ticks_);
        out.probs = pred.mean;
        out.stddev = pred.stddev;
    } else {
        out.probs = classify::baseline_probs(*bundle_->baseline, classify::pool_one(x));
        out.stddev = Eigen::VectorXd::Zero(out.probs.size());
    }
    return out;
}

std::vector<Classification> OnlineClassifier::push(const Eigen::MatrixXd& samples, double start_ts)
{
    require(samples.rows() == history_.rows(), ErrorCode::kShape, "classifier input channel mismatch");
    std::vector<Classification> out;
    const double fs = bundle_->sample_rate_hz;
    Eigen::Index t = 0;
    while (t < samples.cols()) {
        // Take frames up to the next hop boundary.
        const Eigen::Index take = std::min(samples.cols() - t, hop_frames_ - since_last_);
        history_.leftCols(window_frames_ - take) = history_.rightCols(window_frames_ - take).eval();
        history_.rightCols(take) = samples.middleCols(t, take);
        filled_ = std::min(window_frames_, filled_ + take);
        since_last_ += take;
        t += take;
        if (since_last_ == hop_frames_) {
            since_last_ = 0;
            if (filled_ == window_frames_)
                out.push_back(classify(history_, start_ts + static_cast<double>(t) / fs));
        }
    }
    return out;
}

} // namespace mibci::runtime
