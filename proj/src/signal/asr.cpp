#include "signal/asr.hpp"

#include "common/error.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mibci::signal {

namespace {

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Weiszfeld iteration over vectorized block covariances.
Eigen::VectorXd geometric_median(const std::vector<Eigen::VectorXd>& points)
{
    Eigen::VectorXd y = Eigen::VectorXd::Zero(points.front().size());
    for (const auto& p : points)
        y += p;
    y /= static_cast<double>(points.size());

    for (int iter = 0; iter < 500; ++iter) {
        Eigen::VectorXd num = Eigen::VectorXd::Zero(y.size());
        double den = 0.0;
        for (const auto& p : points) {
            const double d = std::max((p - y).norm(), 1e-12 * (1.0 + y.norm()));
            num += p / d;
            den += 1.0 / d;
        }
        const Eigen::VectorXd next = num / den;
        const double step = (next - y).norm();
        y = next;
        if (step <= 1e-10 * (1.0 + y.norm()))
            break;
    }
    return y;
}

} // namespace

AsrModel asr_calibrate(
    const Eigen::MatrixXd& calibration, double sample_rate_hz, const AsrConfig& config)
{
    require(sample_rate_hz > 0, ErrorCode::kParameter, "sample rate must be positive");
    require(config.cutoff_k > 0, ErrorCode::kParameter, "ASR cutoff must be positive");
    require(calibration.cols() >= static_cast<Eigen::Index>(30.0 * sample_rate_hz),
        ErrorCode::kCalibration, "ASR calibration needs at least 30 s of data");
    const auto n_ch = calibration.rows();
    require(n_ch >= 1, ErrorCode::kCalibration, "calibration data has no channels");

    const auto sub = static_cast<Eigen::Index>(std::llround(config.calibration_window_s * sample_rate_hz));
    const auto window = static_cast<Eigen::Index>(std::llround(config.window_s * sample_rate_hz));
    require(sub >= 2 && window >= 2, ErrorCode::kParameter, "ASR windows are too short");

    std::vector<Eigen::VectorXd> blocks;
    for (Eigen::Index start = 0; start + sub <= calibration.cols(); start += sub) {
        const auto seg = calibration.middleCols(start, sub);
        const Eigen::MatrixXd cov = seg * seg.transpose() / static_cast<double>(sub);
        blocks.emplace_back(Eigen::Map<const Eigen::VectorXd>(cov.data(), cov.size()));
    }
    const Eigen::VectorXd med = geometric_median(blocks);
    Eigen::MatrixXd cov = Eigen::Map<const Eigen::MatrixXd>(med.data(), n_ch, n_ch);
    cov = 0.5 * (cov + cov.transpose());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    require(eig.info() == Eigen::Success, ErrorCode::kCalibration,
        "calibration covariance eigendecomposition failed");
    const Eigen::VectorXd evals = eig.eigenvalues();
    require(evals.minCoeff() > 1e-10 * std::max(evals.maxCoeff(), 1e-300), ErrorCode::kCalibration,
        "calibration covariance is rank deficient; reject bad channels before ASR calibration");
    const Eigen::MatrixXd& vecs = eig.eigenvectors();

    AsrModel model;
    model.mixing = vecs * evals.cwiseSqrt().asDiagonal() * vecs.transpose();
    model.cutoff_k = config.cutoff_k;
    model.sample_rate_hz = sample_rate_hz;
    model.window_frames = window;
    model.max_dims_fraction = config.max_dims_fraction;

    const Eigen::MatrixXd components = vecs.transpose() * calibration;
    const Eigen::Index hop = std::max<Eigen::Index>(1, sub / 2);
    std::vector<std::vector<double>> rms(static_cast<std::size_t>(n_ch));
    for (Eigen::Index start = 0; start + sub <= components.cols(); start += hop) {
        const auto seg = components.middleCols(start, sub);
        for (Eigen::Index i = 0; i < n_ch; ++i)
            rms[static_cast<std::size_t>(i)].push_back(
                std::sqrt(seg.row(i).squaredNorm() / static_cast<double>(sub)));
    }

    model.component_mean.resize(n_ch);
    model.component_std.resize(n_ch);
    model.thresholds.resize(n_ch);
    for (Eigen::Index i = 0; i < n_ch; ++i) {
        const auto& r = rms[static_cast<std::size_t>(i)];
        const double mu = median(r);
        std::vector<double> dev;
        dev.reserve(r.size());
        for (double v : r)
            dev.push_back(std::abs(v - mu));
        const double sigma = 1.4826 * median(dev);
        model.component_mean(i) = mu;
        model.component_std(i) = sigma;
        model.thresholds(i) = mu + config.cutoff_k * sigma;
        require(std::isfinite(model.thresholds(i)) && model.thresholds(i) > 0,
            ErrorCode::kCalibration, "non-finite ASR threshold");
    }
    model.threshold_matrix = model.thresholds.asDiagonal() * vecs.transpose();
    return model;
}

AsrDecision asr_reconstruction(const AsrModel& model, const Eigen::MatrixXd& window)
{
    const auto n_ch = model.channels();
    require(window.rows() == n_ch, ErrorCode::kShape, "ASR window channel count mismatch");
    require(window.cols() >= 1, ErrorCode::kShape, "ASR window is empty");

    Eigen::MatrixXd cov = window * window.transpose() / static_cast<double>(window.cols());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    require(eig.info() == Eigen::Success, ErrorCode::kNumeric, "ASR window eigendecomposition failed");
    const Eigen::VectorXd& d = eig.eigenvalues();
    const Eigen::MatrixXd& v = eig.eigenvectors();

    const auto max_dims = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(std::floor(model.max_dims_fraction * static_cast<double>(n_ch))));
    std::vector<bool> keep(static_cast<std::size_t>(n_ch), true);
    AsrDecision decision;
    for (Eigen::Index i = 0; i < n_ch; ++i) {
        // Eigenvalues ascend, so only the top max_dims directions are candidates.
        if (i < n_ch - max_dims)
            continue;
        const double limit = (model.threshold_matrix * v.col(i)).squaredNorm();
        if (!(d(i) < limit)) {
            keep[static_cast<std::size_t>(i)] = false;
            ++decision.rejected;
        }
    }
    if (decision.rejected == 0)
        return decision;

    Eigen::MatrixXd projected = v.transpose() * model.mixing;
    for (Eigen::Index i = 0; i < n_ch; ++i)
        if (!keep[static_cast<std::size_t>(i)])
            projected.row(i).setZero();
    const Eigen::MatrixXd pinv = projected.completeOrthogonalDecomposition().pseudoInverse();
    decision.reconstruction = model.mixing * pinv * v.transpose();
    return decision;
}

SampleChunk asr_process(const AsrModel& model, const SampleChunk& window)
{
    require(window.frames() == model.window_frames, ErrorCode::kShape,
        "ASR window must have " + std::to_string(model.window_frames) + " frames");
    const AsrDecision decision = asr_reconstruction(model, window.samples);
    if (decision.rejected == 0)
        return window;
    SampleChunk out = window;
    out.samples = decision.reconstruction * window.samples;
    return out;
}

AsrStream::AsrStream(const AsrModel& model, Eigen::Index block_frames)
    : model_(model)
    , block_frames_(block_frames)
    , history_(Eigen::MatrixXd::Zero(model.channels(), model.window_frames))
{
    require(block_frames >= 1 && block_frames <= model.window_frames, ErrorCode::kParameter,
        "ASR block must fit in the processing window");
}

void AsrStream::process(Eigen::MatrixXd& samples)
{
    require(samples.rows() == model_.channels(), ErrorCode::kShape, "ASR stream channel mismatch");
    for (Eigen::Index start = 0; start < samples.cols(); start += block_frames_) {
        const Eigen::Index n = std::min(block_frames_, samples.cols() - start);
        process_block(samples.middleCols(start, n));
    }
}

void AsrStream::process_block(Eigen::Ref<Eigen::MatrixXd> block)
{
    const Eigen::Index w = history_.cols();
    const Eigen::Index n = block.cols();
    history_.leftCols(w - n) = history_.rightCols(w - n).eval();
    history_.rightCols(n) = block;
    filled_ = std::min(w, filled_ + n);
    if (filled_ < w)
        return;
    const AsrDecision decision = asr_reconstruction(model_, history_);
    if (decision.rejected == 0)
        return;
    ++modified_;
    block = decision.reconstruction * block;
}

} // namespace mibci::signal
