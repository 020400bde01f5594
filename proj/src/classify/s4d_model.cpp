#include "classify/s4d_model.hpp"

#include "common/error.hpp"

#include <cmath>
#include <numbers>

namespace mibci::classify {

namespace {

// Smallest decay rate allowed by the state parameterization.
constexpr double kMinDecay = 1e-4;

} // namespace

void S4dConfig::validate() const
{
    require(input_dim >= 1, ErrorCode::kParameter, "S4D input dimension must be positive");
    require(n_layers >= 1, ErrorCode::kParameter, "S4D needs at least one layer");
    require(hidden >= 1 && state >= 1, ErrorCode::kParameter, "hidden and state sizes must be positive");
    require(dropout >= 0.0 && dropout < 1.0, ErrorCode::kParameter, "dropout must lie in [0, 1)");
    require(n_classes >= 2, ErrorCode::kParameter, "need at least two classes");
    require(dt_min > 0 && dt_min <= dt_max, ErrorCode::kParameter, "invalid timestep bounds");
}

ParamLayout ParamLayout::build(const S4dConfig& config)
{
    ParamLayout layout;
    auto add = [&](std::string name, Eigen::Index rows, Eigen::Index cols) {
        ParamSlot slot{std::move(name), rows, cols, layout.total};
        layout.total += slot.size();
        layout.slots.push_back(slot);
        return slot.offset;
    };
    const Eigen::Index h = config.hidden;
    const Eigen::Index n = config.state;
    layout.enc_w = add("encoder.weight", h, config.input_dim);
    layout.enc_b = add("encoder.bias", h, 1);
    for (int l = 0; l < config.n_layers; ++l) {
        LayerOffsets lo{};
        for (int d = 0; d < config.directions(); ++d) {
            const std::string p = "layer" + std::to_string(l) + (d == 0 ? ".fwd." : ".bwd.");
            auto& o = lo.dir[d];
            o.log_dt = add(p + "log_dt", h, 1);
            o.a_re = add(p + "a_re", h, n);
            o.a_im = add(p + "a_im", h, n);
            o.b_re = add(p + "b_re", h, n);
            o.b_im = add(p + "b_im", h, n);
            o.c_re = add(p + "c_re", h, n);
            o.c_im = add(p + "c_im", h, n);
            o.d = add(p + "d", h, 1);
        }
        const std::string p = "layer" + std::to_string(l) + ".mix.";
        lo.mix_w = add(p + "weight", h, h * config.directions());
        lo.mix_b = add(p + "bias", h, 1);
        layout.layers.push_back(lo);
    }
    layout.head_w = add("head.weight", config.n_classes, h);
    layout.head_b = add("head.bias", config.n_classes, 1);
    return layout;
}

S4dModel::S4dModel(const S4dConfig& config)
    : config_(config)
{
    config_.validate();
    layout_ = ParamLayout::build(config_);
    params_.assign(layout_.total, 0.0);
}

double softplus(double x) noexcept
{
    return x > 30.0 ? x : std::log1p(std::exp(x));
}

double inverse_softplus(double y) noexcept
{
    return y > 30.0 ? y : std::log(std::expm1(y));
}

cplx S4dModel::state_entry(int layer, int dir, Eigen::Index h, Eigen::Index n) const
{
    const auto& o = layout_.layers[static_cast<std::size_t>(layer)].dir[dir];
    const auto idx = static_cast<std::size_t>(h + n * config_.hidden);
    const double decay = std::max(softplus(params_[o.a_re + idx]), kMinDecay);
    return {-decay, params_[o.a_im + idx]};
}

double S4dModel::timestep(int layer, int dir, Eigen::Index h) const
{
    const auto& o = layout_.layers[static_cast<std::size_t>(layer)].dir[dir];
    return std::exp(params_[o.log_dt + static_cast<std::size_t>(h)]);
}

bool S4dModel::all_finite() const
{
    for (const double v : params_)
        if (!std::isfinite(v))
            return false;
    return true;
}

std::uint64_t Rng::next()
{
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Rng::uniform()
{
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double Rng::normal()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0)
        u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
}

S4dModel s4d_init(const S4dConfig& config, std::uint64_t seed)
{
    S4dModel model(config);
    Rng rng(seed);
    auto& p = model.params();
    const auto& lay = model.layout();
    const Eigen::Index h = config.hidden;
    const Eigen::Index n = config.state;

    auto fill_uniform = [&](std::size_t off, std::size_t count, double bound) {
        for (std::size_t i = 0; i < count; ++i)
            p[off + i] = bound * (2.0 * rng.uniform() - 1.0);
    };

    fill_uniform(lay.enc_w, static_cast<std::size_t>(h * config.input_dim),
        1.0 / std::sqrt(static_cast<double>(config.input_dim)));
    const double a_re0 = inverse_softplus(0.5);
    const double log_lo = std::log(config.dt_min);
    const double log_hi = std::log(config.dt_max);
    for (int l = 0; l < config.n_layers; ++l) {
        const auto& lo = lay.layers[static_cast<std::size_t>(l)];
        for (int d = 0; d < config.directions(); ++d) {
            const auto& o = lo.dir[d];
            for (Eigen::Index c = 0; c < h; ++c)
                p[o.log_dt + static_cast<std::size_t>(c)] = log_lo + rng.uniform() * (log_hi - log_lo);
            for (Eigen::Index k = 0; k < n; ++k) {
                for (Eigen::Index c = 0; c < h; ++c) {
                    const auto idx = static_cast<std::size_t>(c + k * h);
                    p[o.a_re + idx] = a_re0;
                    p[o.a_im + idx] = std::numbers::pi * static_cast<double>(k);
                    p[o.b_re + idx] = 1.0;
                    p[o.b_im + idx] = 0.0;
                    p[o.c_re + idx] = rng.normal() * std::sqrt(0.5);
                    p[o.c_im + idx] = rng.normal() * std::sqrt(0.5);
                }
            }
            for (Eigen::Index c = 0; c < h; ++c)
                p[o.d + static_cast<std::size_t>(c)] = rng.normal();
        }
        fill_uniform(lo.mix_w, static_cast<std::size_t>(h * h * config.directions()),
            1.0 / std::sqrt(static_cast<double>(h * config.directions())));
    }
    fill_uniform(lay.head_w, static_cast<std::size_t>(config.n_classes * h),
        1.0 / std::sqrt(static_cast<double>(h)));
    model.meta.seed = seed;
    return model;
}

} // namespace mibci::classify
