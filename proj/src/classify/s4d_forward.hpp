#pragma once

#include "classify/s4d_model.hpp"

#include <array>
#include <deque>
#include <optional>

namespace mibci::classify {

// ZOH-discretized layer quantities for one direction:
//   abar = exp(dt*A), bbar = (abar - 1)/A * B, w = C * bbar,
//   kernel[l] = Re(sum_n w_n * abar_n^l)
struct DirectionKernel {
    Eigen::MatrixXd kernel; // [length x hidden]
    std::vector<cplx> a, abar, bbar, w; // index h + n*hidden
    std::vector<double> dt;
};

struct KernelSet {
    Eigen::Index length = 0;
    std::vector<std::array<DirectionKernel, 2>> layers;
};

KernelSet compute_kernels(const S4dModel& model, Eigen::Index length);

struct LayerCache {
    Eigen::MatrixXd u;    // layer input [H x L]
    Eigen::MatrixXd z;    // SSM outputs, forward rows then backward rows
    Eigen::MatrixXd pre;  // mixing output before the activation
    Eigen::MatrixXd mask; // dropout scale per element (empty when inactive)
};

struct ForwardCache {
    Eigen::MatrixXd input;
    std::vector<LayerCache> layers;
    Eigen::MatrixXd output;
    Eigen::VectorXd pooled;
};

double gelu(double x) noexcept;
double gelu_grad(double x) noexcept;
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

/// One sequence [input_dim x L]; dropout is active when `dropout_rng` is non-null.
Eigen::VectorXd forward_conv_one(const S4dModel& model, const KernelSet& kernels,
    const Eigen::MatrixXd& x, Rng* dropout_rng = nullptr, ForwardCache* cache = nullptr);

/// Logits [n x classes] for a batch of equal-length sequences.
Eigen::MatrixXd s4d_forward_conv(const S4dModel& model, const std::vector<Eigen::MatrixXd>& batch,
    bool train_mode = false, std::uint64_t seed = 0);

// Linear recurrence x_t = abar*x_{t-1} + bbar*u_t, y_t = Re(C x_t) + D u_t for
// every hidden channel of one layer direction.
class SsmStepper {
public:
    SsmStepper(const S4dModel& model, int layer, int dir);

    Eigen::VectorXd step(const Eigen::VectorXd& u);
    void reset();
    const std::vector<cplx>& state() const noexcept { return x_; }

private:
    Eigen::Index hidden_, states_;
    std::vector<cplx> abar_, bbar_, c_, x_;
    Eigen::VectorXd d_;
};

/// Recurrent evaluation of the full model over one sequence; the backward
/// direction runs its recurrence over the reversed sequence.
Eigen::VectorXd s4d_forward_recurrent(const S4dModel& model, const Eigen::MatrixXd& x);

// Online state: the last `window_steps` feature steps. Each push after the
// buffer fills returns logits for the buffered window.
class S4dStream {
public:
    S4dStream(const S4dModel& model, Eigen::Index window_steps);

    std::optional<Eigen::VectorXd> push(const Eigen::VectorXd& step_input);
    void reset();
    std::size_t buffered() const noexcept { return buffer_.size(); }

private:
    const S4dModel* model_;
    Eigen::Index window_steps_;
    std::deque<Eigen::VectorXd> buffer_;
};

} // namespace mibci::classify
