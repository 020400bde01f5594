#include "classify/s4d_forward.hpp"

#include "common/error.hpp"

#include <cmath>
#include <numbers>

namespace mibci::classify {

using Eigen::Index;
using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

namespace {

DirectionKernel direction_kernel(const S4dModel& model, int layer, int dir, Index length)
{
    const auto& cfg = model.config();
    const Index hidden = cfg.hidden;
    const Index states = cfg.state;
    const auto& o = model.layout().layers[static_cast<std::size_t>(layer)].dir[dir];
    const double* b_re = model.at(o.b_re);
    const double* b_im = model.at(o.b_im);
    const double* c_re = model.at(o.c_re);
    const double* c_im = model.at(o.c_im);

    DirectionKernel k;
    const auto count = static_cast<std::size_t>(hidden * states);
    k.a.resize(count);
    k.abar.resize(count);
    k.bbar.resize(count);
    k.w.resize(count);
    k.dt.resize(static_cast<std::size_t>(hidden));
    k.kernel = Eigen::MatrixXd::Zero(length, hidden);
    for (Index h = 0; h < hidden; ++h) {
        const double dt = model.timestep(layer, dir, h);
        k.dt[static_cast<std::size_t>(h)] = dt;
        double* col = k.kernel.col(h).data();
        for (Index n = 0; n < states; ++n) {
            const auto i = static_cast<std::size_t>(h + n * hidden);
            const cplx a = model.state_entry(layer, dir, h, n);
            const cplx abar = std::exp(dt * a);
            const cplx bbar = (abar - 1.0) / a * cplx(b_re[i], b_im[i]);
            const cplx w = cplx(c_re[i], c_im[i]) * bbar;
            k.a[i] = a;
            k.abar[i] = abar;
            k.bbar[i] = bbar;
            k.w[i] = w;
            // Vandermonde row: w * abar^l
            cplx p = w;
            for (Index l = 0; l < length; ++l) {
                col[l] += p.real();
                p *= abar;
            }
        }
    }
    return k;
}

void causal_conv(const double* k, const double* u, double* y, Index n)
{
    for (Index t = 0; t < n; ++t) {
        double acc = 0.0;
        for (Index l = 0; l <= t; ++l)
            acc += k[l] * u[t - l];
        y[t] = acc;
    }
}

void anticausal_conv(const double* k, const double* u, double* y, Index n)
{
    for (Index t = 0; t < n; ++t) {
        double acc = 0.0;
        const Index span = n - t;
        for (Index l = 0; l < span; ++l)
            acc += k[l] * u[t + l];
        y[t] = acc;
    }
}

} // namespace

KernelSet compute_kernels(const S4dModel& model, Index length)
{
    require(length >= 1, ErrorCode::kParameter, "sequence length must be positive");
    KernelSet set;
    set.length = length;
    for (int l = 0; l < model.config().n_layers; ++l) {
        std::array<DirectionKernel, 2> dirs;
        for (int d = 0; d < model.config().directions(); ++d)
            dirs[static_cast<std::size_t>(d)] = direction_kernel(model, l, d, length);
        set.layers.push_back(std::move(dirs));
    }
    return set;
}

double gelu(double x) noexcept
{
    return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

double gelu_grad(double x) noexcept
{
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) + x * pdf;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits)
{
    const double m = logits.maxCoeff();
    Eigen::VectorXd e = (logits.array() - m).exp();
    return e / e.sum();
}

Eigen::VectorXd forward_conv_one(const S4dModel& model, const KernelSet& kernels,
    const Eigen::MatrixXd& x, Rng* dropout_rng, ForwardCache* cache)
{
    const auto& cfg = model.config();
    const auto& lay = model.layout();
    const Index hidden = cfg.hidden;
    const Index len = x.cols();
    require(x.rows() == cfg.input_dim, ErrorCode::kShape,
        "input has " + std::to_string(x.rows()) + " feature channels, model expects "
            + std::to_string(cfg.input_dim));
    require(kernels.length == len, ErrorCode::kShape, "kernel length does not match the sequence");

    const ConstMap enc_w(model.at(lay.enc_w), hidden, cfg.input_dim);
    const ConstVecMap enc_b(model.at(lay.enc_b), hidden);
    Eigen::MatrixXd u = enc_w * x;
    u.colwise() += enc_b;

    if (cache) {
        cache->input = x;
        cache->layers.assign(static_cast<std::size_t>(cfg.n_layers), {});
    }

    const int dirs = cfg.directions();
    const double keep = 1.0 - cfg.dropout;
    Eigen::MatrixXd ut(len, hidden);
    Eigen::MatrixXd yt(len, hidden);
    for (int l = 0; l < cfg.n_layers; ++l) {
        const auto& lo = lay.layers[static_cast<std::size_t>(l)];
        ut = u.transpose();
        Eigen::MatrixXd z(hidden * dirs, len);
        for (int d = 0; d < dirs; ++d) {
            const auto& dk = kernels.layers[static_cast<std::size_t>(l)][static_cast<std::size_t>(d)];
            const double* dskip = model.at(lo.dir[d].d);
            for (Index h = 0; h < hidden; ++h) {
                if (d == 0)
                    causal_conv(dk.kernel.col(h).data(), ut.col(h).data(), yt.col(h).data(), len);
                else
                    anticausal_conv(dk.kernel.col(h).data(), ut.col(h).data(), yt.col(h).data(), len);
                yt.col(h) += dskip[h] * ut.col(h);
            }
            z.middleRows(d * hidden, hidden) = yt.transpose();
        }
        const ConstMap mix_w(model.at(lo.mix_w), hidden, hidden * dirs);
        const ConstVecMap mix_b(model.at(lo.mix_b), hidden);
        Eigen::MatrixXd pre = mix_w * z;
        pre.colwise() += mix_b;
        Eigen::MatrixXd act = pre.unaryExpr([](double v) { return gelu(v); });
        Eigen::MatrixXd mask;
        if (dropout_rng && cfg.dropout > 0.0) {
            mask.resize(hidden, len);
            for (Index i = 0; i < mask.size(); ++i)
                mask.data()[i] = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
            act.array() *= mask.array();
        }
        if (cache) {
            auto& lc = cache->layers[static_cast<std::size_t>(l)];
            lc.u = u;
            lc.z = std::move(z);
            lc.pre = std::move(pre);
            lc.mask = std::move(mask);
        }
        u += act;
        require(u.allFinite(), ErrorCode::kNumeric,
            "non-finite activation in S4D layer " + std::to_string(l));
    }

    Eigen::VectorXd pooled = u.rowwise().mean();
    const ConstMap head_w(model.at(lay.head_w), cfg.n_classes, hidden);
    const ConstVecMap head_b(model.at(lay.head_b), cfg.n_classes);
    Eigen::VectorXd logits = head_w * pooled + head_b;
    if (cache) {
        cache->output = std::move(u);
        cache->pooled = pooled;
    }
    return logits;
}

Eigen::MatrixXd s4d_forward_conv(const S4dModel& model, const std::vector<Eigen::MatrixXd>& batch,
    bool train_mode, std::uint64_t seed)
{
    require(!batch.empty(), ErrorCode::kParameter, "empty batch");
    const Index len = batch.front().cols();
    const KernelSet kernels = compute_kernels(model, len);
    Eigen::MatrixXd out(static_cast<Index>(batch.size()), model.config().n_classes);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        require(batch[i].cols() == len, ErrorCode::kShape, "batch sequences differ in length");
        Rng rng(seed + 0x9E3779B97F4A7C15ULL * (i + 1));
        out.row(static_cast<Index>(i))
            = forward_conv_one(model, kernels, batch[i], train_mode ? &rng : nullptr).transpose();
    }
    return out;
}

SsmStepper::SsmStepper(const S4dModel& model, int layer, int dir)
    : hidden_(model.config().hidden)
    , states_(model.config().state)
{
    require(layer >= 0 && layer < model.config().n_layers && dir >= 0
            && dir < model.config().directions(),
        ErrorCode::kParameter, "no such S4D layer direction");
    const auto& o = model.layout().layers[static_cast<std::size_t>(layer)].dir[dir];
    const auto count = static_cast<std::size_t>(hidden_ * states_);
    abar_.resize(count);
    bbar_.resize(count);
    c_.resize(count);
    x_.assign(count, cplx(0.0, 0.0));
    d_ = ConstVecMap(model.at(o.d), hidden_);
    for (Index h = 0; h < hidden_; ++h) {
        const double dt = model.timestep(layer, dir, h);
        for (Index n = 0; n < states_; ++n) {
            const auto i = static_cast<std::size_t>(h + n * hidden_);
            const cplx a = model.state_entry(layer, dir, h, n);
            abar_[i] = std::exp(dt * a);
            bbar_[i] = (abar_[i] - 1.0) / a * cplx(model.at(o.b_re)[i], model.at(o.b_im)[i]);
            c_[i] = cplx(model.at(o.c_re)[i], model.at(o.c_im)[i]);
        }
    }
}

Eigen::VectorXd SsmStepper::step(const Eigen::VectorXd& u)
{
    require(u.size() == hidden_, ErrorCode::kShape, "stepper input size mismatch");
    Eigen::VectorXd y = d_.cwiseProduct(u);
    for (Index n = 0; n < states_; ++n) {
        for (Index h = 0; h < hidden_; ++h) {
            const auto i = static_cast<std::size_t>(h + n * hidden_);
            x_[i] = abar_[i] * x_[i] + bbar_[i] * u(h);
            y(h) += (c_[i] * x_[i]).real();
        }
    }
    return y;
}

void SsmStepper::reset()
{
    std::fill(x_.begin(), x_.end(), cplx(0.0, 0.0));
}

Eigen::VectorXd s4d_forward_recurrent(const S4dModel& model, const Eigen::MatrixXd& x)
{
    const auto& cfg = model.config();
    const auto& lay = model.layout();
    const Index hidden = cfg.hidden;
    const Index len = x.cols();
    require(x.rows() == cfg.input_dim, ErrorCode::kShape, "input feature count mismatch");

    const ConstMap enc_w(model.at(lay.enc_w), hidden, cfg.input_dim);
    const ConstVecMap enc_b(model.at(lay.enc_b), hidden);
    Eigen::MatrixXd u = enc_w * x;
    u.colwise() += enc_b;

    const int dirs = cfg.directions();
    for (int l = 0; l < cfg.n_layers; ++l) {
        const auto& lo = lay.layers[static_cast<std::size_t>(l)];
        Eigen::MatrixXd z(hidden * dirs, len);
        SsmStepper fwd(model, l, 0);
        for (Index t = 0; t < len; ++t)
            z.block(0, t, hidden, 1) = fwd.step(u.col(t));
        if (dirs == 2) {
            SsmStepper bwd(model, l, 1);
            for (Index t = len - 1; t >= 0; --t)
                z.block(hidden, t, hidden, 1) = bwd.step(u.col(t));
        }
        const ConstMap mix_w(model.at(lo.mix_w), hidden, hidden * dirs);
        const ConstVecMap mix_b(model.at(lo.mix_b), hidden);
        Eigen::MatrixXd pre = mix_w * z;
        pre.colwise() += mix_b;
        u += pre.unaryExpr([](double v) { return gelu(v); });
        require(u.allFinite(), ErrorCode::kNumeric,
            "non-finite activation in S4D layer " + std::to_string(l));
    }
    const Eigen::VectorXd pooled = u.rowwise().mean();
    const ConstMap head_w(model.at(lay.head_w), cfg.n_classes, hidden);
    const ConstVecMap head_b(model.at(lay.head_b), cfg.n_classes);
    return head_w * pooled + head_b;
}

S4dStream::S4dStream(const S4dModel& model, Index window_steps)
    : model_(&model)
    , window_steps_(window_steps)
{
    require(window_steps >= 1, ErrorCode::kParameter, "stream window must be positive");
}

std::optional<Eigen::VectorXd> S4dStream::push(const Eigen::VectorXd& step_input)
{
    require(step_input.size() == model_->config().input_dim, ErrorCode::kShape,
        "stream step does not match model input width");
    buffer_.push_back(step_input);
    if (static_cast<Index>(buffer_.size()) > window_steps_)
        buffer_.pop_front();
    if (static_cast<Index>(buffer_.size()) < window_steps_)
        return std::nullopt;
    Eigen::MatrixXd window(model_->config().input_dim, window_steps_);
    for (Index t = 0; t < window_steps_; ++t)
        window.col(t) = buffer_[static_cast<std::size_t>(t)];
    return s4d_forward_recurrent(*model_, window);
}

void S4dStream::reset()
{
    buffer_.clear();
}

} // namespace mibci::classify
