#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace mibci::classify {

using cplx = std::complex<double>;

struct S4dConfig {
    Eigen::Index input_dim = 0;
    int n_layers = 3;
    int hidden = 64;
    int state = 32;
    double dropout = 0.2;
    bool bidirectional = true;
    int n_classes = 3;
    double dt_min = 1e-3;
    double dt_max = 1e-1;

    int directions() const noexcept { return bidirectional ? 2 : 1; }
    void validate() const;
};

/// Named slice of the flat parameter vector.
struct ParamSlot {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 1;
    std::size_t offset = 0;

    std::size_t size() const noexcept { return static_cast<std::size_t>(rows * cols); }
};

struct DirectionOffsets {
    std::size_t log_dt, a_re, a_im, b_re, b_im, c_re, c_im, d;
};

struct LayerOffsets {
    DirectionOffsets dir[2];
    std::size_t mix_w, mix_b;
};

struct ParamLayout {
    std::vector<ParamSlot> slots;
    std::size_t enc_w = 0, enc_b = 0;
    std::vector<LayerOffsets> layers;
    std::size_t head_w = 0, head_b = 0;
    std::size_t total = 0;

    static ParamLayout build(const S4dConfig& config);
};

struct TrainingMeta {
    int epochs_run = 0;
    int best_epoch = -1;
    double final_train_loss = 0.0;
    double final_val_loss = 0.0;
    std::uint64_t seed = 0;
};

// Diagonal state matrix per hidden channel and direction:
//   A = -softplus(a_re) + i * a_im,  dt = exp(log_dt)
// The softplus map keeps Re(A) < 0 for any value of the free parameter.
class S4dModel {
public:
    S4dModel() = default;
    explicit S4dModel(const S4dConfig& config);

    const S4dConfig& config() const noexcept { return config_; }
    const ParamLayout& layout() const noexcept { return layout_; }
    std::vector<double>& params() noexcept { return params_; }
    const std::vector<double>& params() const noexcept { return params_; }

    double* at(std::size_t offset) noexcept { return params_.data() + offset; }
    const double* at(std::size_t offset) const noexcept { return params_.data() + offset; }

    /// Continuous-time state entry for (layer, direction, channel h, state n).
    cplx state_entry(int layer, int dir, Eigen::Index h, Eigen::Index n) const;
    double timestep(int layer, int dir, Eigen::Index h) const;

    bool all_finite() const;

    TrainingMeta meta;

private:
    S4dConfig config_;
    ParamLayout layout_;
    std::vector<double> params_;
};

double softplus(double x) noexcept;
double inverse_softplus(double y) noexcept;

/// S4D-Lin initialization: A_n = -1/2 + i*pi*n, log dt uniform in [log dt_min, log dt_max].
S4dModel s4d_init(const S4dConfig& config, std::uint64_t seed);

/// splitmix-style deterministic generator with library-independent draws.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next();
    double uniform();
    double normal();

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace mibci::classify
