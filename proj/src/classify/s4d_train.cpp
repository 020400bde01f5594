#include "classify/s4d_train.hpp"

#include <cmath>
#include <limits>

namespace mibci::classify {

using Eigen::Index;
using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
using GradMap = Eigen::Map<Eigen::MatrixXd>;
using GradVecMap = Eigen::Map<Eigen::VectorXd>;

void TrainConfig::validate() const
{
    require(learning_rate > 0 && batch_size >= 1 && max_epochs >= 1 && patience >= 1,
        ErrorCode::kParameter, "training rates and sizes must be positive");
    require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && epsilon > 0,
        ErrorCode::kParameter, "invalid optimizer moment coefficients");
}

nlohmann::json TrainingReport::to_json() const
{
    nlohmann::json j;
    j["epochs"] = nlohmann::json::array();
    for (const auto& e : epochs)
        j["epochs"].push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss},
            {"train_accuracy", e.train_accuracy}, {"val_loss", e.val_loss},
            {"val_accuracy", e.val_accuracy}});
    j["best_epoch"] = best_epoch;
    j["early_stopped"] = early_stopped;
    j["seed"] = seed;
    return j;
}

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t sample_seed(std::uint64_t base, std::size_t i)
{
    Rng mix(base ^ (kGolden * (static_cast<std::uint64_t>(i) + 1)));
    mix.next();
    return mix.next();
}

// Accumulates dL/dy for every SSM output into per-kernel gradients and returns
// the gradient with respect to the layer input.
void ssm_backward(const Eigen::MatrixXd& dyt, const Eigen::MatrixXd& ut, const Eigen::MatrixXd& kernel,
    const double* dskip, bool anticausal, Eigen::MatrixXd& gkernel, double* gskip, Eigen::MatrixXd& dut)
{
    const Index len = ut.rows();
    for (Index h = 0; h < ut.cols(); ++h) {
        const double* dy = dyt.col(h).data();
        const double* u = ut.col(h).data();
        const double* k = kernel.col(h).data();
        double* gk = gkernel.col(h).data();
        double* du = dut.col(h).data();
        gskip[h] += dyt.col(h).dot(ut.col(h));
        for (Index t = 0; t < len; ++t)
            du[t] += dskip[h] * dy[t];
        if (!anticausal) {
            for (Index l = 0; l < len; ++l) {
                double acc = 0.0;
                for (Index t = l; t < len; ++t)
                    acc += dy[t] * u[t - l];
                gk[l] += acc;
            }
            for (Index s = 0; s < len; ++s) {
                double acc = 0.0;
                for (Index t = s; t < len; ++t)
                    acc += dy[t] * k[t - s];
                du[s] += acc;
            }
        } else {
            for (Index l = 0; l < len; ++l) {
                double acc = 0.0;
                for (Index t = 0; t + l < len; ++t)
                    acc += dy[t] * u[t + l];
                gk[l] += acc;
            }
            for (Index s = 0; s < len; ++s) {
                double acc = 0.0;
                for (Index t = 0; t <= s; ++t)
                    acc += dy[t] * k[s - t];
                du[s] += acc;
            }
        }
    }
}

void sample_backward(const S4dModel& model, const KernelSet& kernels, const ForwardCache& cache,
    const Eigen::VectorXd& dlogits, std::vector<double>& grad,
    std::vector<std::array<Eigen::MatrixXd, 2>>& gkernels)
{
    const auto& cfg = model.config();
    const auto& lay = model.layout();
    const Index hidden = cfg.hidden;
    const Index len = cache.input.cols();
    const int dirs = cfg.directions();

    GradMap g_head_w(grad.data() + lay.head_w, cfg.n_classes, hidden);
    GradVecMap g_head_b(grad.data() + lay.head_b, cfg.n_classes);
    const ConstMap head_w(model.at(lay.head_w), cfg.n_classes, hidden);
    g_head_w.noalias() += dlogits * cache.pooled.transpose();
    g_head_b += dlogits;
    const Eigen::VectorXd dpooled = head_w.transpose() * dlogits / static_cast<double>(len);
    Eigen::MatrixXd du = dpooled.replicate(1, len);

    Eigen::MatrixXd dut(len, hidden);
    for (int l = cfg.n_layers - 1; l >= 0; --l) {
        const auto& lo = lay.layers[static_cast<std::size_t>(l)];
        const auto& lc = cache.layers[static_cast<std::size_t>(l)];
        Eigen::MatrixXd dpre = du;
        if (lc.mask.size() > 0)
            dpre.array() *= lc.mask.array();
        dpre.array() *= lc.pre.unaryExpr([](double v) { return gelu_grad(v); }).array();

        GradMap g_mix_w(grad.data() + lo.mix_w, hidden, hidden * dirs);
        GradVecMap g_mix_b(grad.data() + lo.mix_b, hidden);
        const ConstMap mix_w(model.at(lo.mix_w), hidden, hidden * dirs);
        g_mix_w.noalias() += dpre * lc.z.transpose();
        g_mix_b += dpre.rowwise().sum();
        const Eigen::MatrixXd dz = mix_w.transpose() * dpre;

        const Eigen::MatrixXd ut = lc.u.transpose();
        dut = du.transpose(); // residual path
        for (int d = 0; d < dirs; ++d) {
            const auto& dk = kernels.layers[static_cast<std::size_t>(l)][static_cast<std::size_t>(d)];
            const Eigen::MatrixXd dyt = dz.middleRows(d * hidden, hidden).transpose();
            ssm_backward(dyt, ut, dk.kernel, model.at(lo.dir[d].d), d == 1,
                gkernels[static_cast<std::size_t>(l)][static_cast<std::size_t>(d)],
                grad.data() + lo.dir[d].d, dut);
        }
        du = dut.transpose();
    }

    GradMap g_enc_w(grad.data() + lay.enc_w, hidden, cfg.input_dim);
    GradVecMap g_enc_b(grad.data() + lay.enc_b, hidden);
    g_enc_w.noalias() += du * cache.input.transpose();
    g_enc_b += du.rowwise().sum();
}

// Chain rule from kernel gradients to the SSM parameters.
void kernel_backward(const S4dModel& model, const KernelSet& kernels,
    const std::vector<std::array<Eigen::MatrixXd, 2>>& gkernels, std::vector<double>& grad)
{
    const auto& cfg = model.config();
    const Index hidden = cfg.hidden;
    const Index states = cfg.state;
    const Index len = kernels.length;
    for (int l = 0; l < cfg.n_layers; ++l) {
        for (int d = 0; d < cfg.directions(); ++d) {
            const auto& o = model.layout().layers[static_cast<std::size_t>(l)].dir[d];
            const auto& dk = kernels.layers[static_cast<std::size_t>(l)][static_cast<std::size_t>(d)];
            const Eigen::MatrixXd& gk = gkernels[static_cast<std::size_t>(l)][static_cast<std::size_t>(d)];
            for (Index h = 0; h < hidden; ++h) {
                const double* g = gk.col(h).data();
                const double dt = dk.dt[static_cast<std::size_t>(h)];
                double g_dt = 0.0;
                for (Index n = 0; n < states; ++n) {
                    const auto i = static_cast<std::size_t>(h + n * hidden);
                    const cplx abar = dk.abar[i];
                    const cplx a = dk.a[i];
                    const cplx w = dk.w[i];
                    const cplx bbar = dk.bbar[i];
                    const cplx b(model.at(o.b_re)[i], model.at(o.b_im)[i]);
                    const cplx c(model.at(o.c_re)[i], model.at(o.c_im)[i]);

                    // s0 = sum_l g_l conj(abar)^l, s1 = sum_l g_l l conj(abar)^(l-1)
                    const cplx cab = std::conj(abar);
                    cplx p(1.0, 0.0);
                    cplx s0(0.0, 0.0), s1(0.0, 0.0);
                    for (Index t = 0; t < len; ++t) {
                        s0 += g[t] * p;
                        if (t + 1 < len)
                            s1 += g[t + 1] * static_cast<double>(t + 1) * p;
                        p *= cab;
                    }
                    const cplx g_w = s0;
                    cplx g_abar = std::conj(w) * s1;
                    const cplx g_c = std::conj(bbar) * g_w;
                    const cplx g_bbar = std::conj(c) * g_w;
                    const cplx q = (abar - 1.0) / a;
                    const cplx g_b = std::conj(q) * g_bbar;
                    const cplx g_q = std::conj(b) * g_bbar;
                    g_abar += std::conj(1.0 / a) * g_q;
                    cplx g_a = std::conj(-(abar - 1.0) / (a * a)) * g_q;
                    g_a += std::conj(dt * abar) * g_abar;
                    g_dt += (std::conj(a * abar) * g_abar).real();

                    const double a_re_free = model.at(o.a_re)[i];
                    const double decay = softplus(a_re_free);
                    if (decay >= 1e-4)
                        grad[o.a_re + i] += -g_a.real() / (1.0 + std::exp(-a_re_free));
                    grad[o.a_im + i] += g_a.imag();
                    grad[o.b_re + i] += g_b.real();
                    grad[o.b_im + i] += g_b.imag();
                    grad[o.c_re + i] += g_c.real();
                    grad[o.c_im + i] += g_c.imag();
                }
                grad[o.log_dt + static_cast<std::size_t>(h)] += dt * g_dt;
            }
        }
    }
}

double cross_entropy(const Eigen::VectorXd& logits, int label)
{
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    return lse - logits(label);
}

} // namespace

BatchResult loss_and_gradient(const S4dModel& model, const std::vector<const Eigen::MatrixXd*>& batch,
    const std::vector<int>& labels, std::vector<double>& grad, std::uint64_t dropout_seed,
    bool dropout_active)
{
    require(!batch.empty() && batch.size() == labels.size(), ErrorCode::kParameter,
        "batch and labels must be non-empty and aligned");
    const auto& cfg = model.config();
    const Index len = batch.front()->cols();
    const KernelSet kernels = compute_kernels(model, len);
    grad.assign(model.params().size(), 0.0);
    std::vector<std::array<Eigen::MatrixXd, 2>> gkernels(static_cast<std::size_t>(cfg.n_layers));
    for (auto& pair : gkernels)
        for (auto& m : pair)
            m = Eigen::MatrixXd::Zero(len, cfg.hidden);

    BatchResult result;
    const double scale = 1.0 / static_cast<double>(batch.size());
    ForwardCache cache;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        require(batch[i]->cols() == len, ErrorCode::kShape, "batch sequences differ in length");
        require(labels[i] >= 0 && labels[i] < cfg.n_classes, ErrorCode::kParameter, "label out of range");
        Rng rng(sample_seed(dropout_seed, i));
        const Eigen::VectorXd logits
            = forward_conv_one(model, kernels, *batch[i], dropout_active ? &rng : nullptr, &cache);
        result.loss += cross_entropy(logits, labels[i]) * scale;
        Index arg = 0;
        logits.maxCoeff(&arg);
        if (arg == labels[i])
            ++result.correct;
        Eigen::VectorXd dlogits = softmax(logits);
        dlogits(labels[i]) -= 1.0;
        dlogits *= scale;
        sample_backward(model, kernels, cache, dlogits, grad, gkernels);
    }
    kernel_backward(model, kernels, gkernels, grad);
    return result;
}

double batch_loss(const S4dModel& model, const std::vector<const Eigen::MatrixXd*>& batch,
    const std::vector<int>& labels, std::uint64_t dropout_seed, bool dropout_active)
{
    const KernelSet kernels = compute_kernels(model, batch.front()->cols());
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Rng rng(sample_seed(dropout_seed, i));
        const Eigen::VectorXd logits
            = forward_conv_one(model, kernels, *batch[i], dropout_active ? &rng : nullptr);
        loss += cross_entropy(logits, labels[i]);
    }
    return loss / static_cast<double>(batch.size());
}

namespace {

struct SetMetrics {
    double loss = 0.0;
    double accuracy = 0.0;
};

SetMetrics evaluate_set(const S4dModel& model, const features::FeatureTensor& set)
{
    SetMetrics m;
    if (set.size() == 0)
        return m;
    const KernelSet kernels = compute_kernels(model, set.steps());
    int correct = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const Eigen::VectorXd logits = forward_conv_one(model, kernels, set.sequences[i]);
        m.loss += cross_entropy(logits, set.labels[i]);
        Index arg = 0;
        logits.maxCoeff(&arg);
        if (arg == set.labels[i])
            ++correct;
    }
    m.loss /= static_cast<double>(set.size());
    m.accuracy = static_cast<double>(correct) / static_cast<double>(set.size());
    return m;
}

} // namespace

TrainResult train(S4dModel model, const features::FeatureTensor& train_set,
    const features::FeatureTensor& val_set, const TrainConfig& config)
{
    config.validate();
    require(train_set.size() > 0, ErrorCode::kParameter, "training set is empty");
    require(train_set.feature_channels() == model.config().input_dim, ErrorCode::kShape,
        "training features do not match the model input width");
    for (const int label : train_set.labels)
        require(label >= 0 && label < model.config().n_classes, ErrorCode::kParameter,
            "training label out of range");

    auto& params = model.params();
    const std::size_t n_params = params.size();
    std::vector<double> m(n_params, 0.0), v(n_params, 0.0), grad;
    std::vector<double> best = params;
    double best_val = std::numeric_limits<double>::infinity();
    int wait = 0;
    long step = 0;

    TrainingReport report;
    report.seed = config.seed;
    Rng order_rng(config.seed);
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;

    const bool has_val = val_set.size() > 0;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(order_rng.next() % i)]);

        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            std::vector<const Eigen::MatrixXd*> xs;
            std::vector<int> ys;
            for (std::size_t k = start; k < stop; ++k) {
                xs.push_back(&train_set.sequences[order[k]]);
                ys.push_back(train_set.labels[order[k]]);
            }
            const std::uint64_t dropout_seed
                = config.seed ^ (static_cast<std::uint64_t>(epoch) << 32) ^ static_cast<std::uint64_t>(start);
            const std::vector<double> before = params;
            BatchResult br;
            try {
                br = loss_and_gradient(model, xs, ys, grad, dropout_seed, true);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::kNumeric)
                    throw;
                params = before;
                throw TrainingDiverged(std::string("diverged in epoch ") + std::to_string(epoch)
                        + ": " + e.what(), model);
            }
            if (!std::isfinite(br.loss)) {
                params = before;
                throw TrainingDiverged("loss became non-finite in epoch " + std::to_string(epoch), model);
            }
            ++step;
            const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            for (std::size_t p = 0; p < n_params; ++p) {
                m[p] = config.beta1 * m[p] + (1.0 - config.beta1) * grad[p];
                v[p] = config.beta2 * v[p] + (1.0 - config.beta2) * grad[p] * grad[p];
                params[p] -= config.learning_rate * (m[p] / c1) / (std::sqrt(v[p] / c2) + config.epsilon);
            }
            if (!model.all_finite()) {
                params = before;
                throw TrainingDiverged("parameters became non-finite in epoch " + std::to_string(epoch), model);
            }
        }

        EpochMetrics em;
        em.epoch = epoch;
        const SetMetrics tm = evaluate_set(model, train_set);
        em.train_loss = tm.loss;
        em.train_accuracy = tm.accuracy;
        if (has_val) {
            const SetMetrics vm = evaluate_set(model, val_set);
            em.val_loss = vm.loss;
            em.val_accuracy = vm.accuracy;
        }
        report.epochs.push_back(em);
        model.meta.epochs_run = epoch;

        const double monitored = has_val ? em.val_loss : em.train_loss;
        if (monitored < best_val) {
            best_val = monitored;
            best = params;
            report.best_epoch = epoch;
            wait = 0;
        } else if (++wait >= config.patience) {
            report.early_stopped = true;
            break;
        }
    }

    params = best;
    model.meta.best_epoch = report.best_epoch;
    model.meta.seed = config.seed;
    const auto& last = report.epochs[static_cast<std::size_t>(report.best_epoch - 1)];
    model.meta.final_train_loss = last.train_loss;
    model.meta.final_val_loss = last.val_loss;
    return {std::move(model), std::move(report)};
}

PredictionWithConfidence mc_dropout_predict(
    const S4dModel& model, const Eigen::MatrixXd& input, int n_passes, std::uint64_t seed)
{
    require(n_passes >= 2, ErrorCode::kParameter, "MC dropout needs at least two passes");
    const KernelSet kernels = compute_kernels(model, input.cols());
    const bool stochastic = model.config().dropout > 0.0;
    const Index k = model.config().n_classes;

    // Shifted accumulation: identical passes give exactly zero spread.
    Eigen::VectorXd first, sum = Eigen::VectorXd::Zero(k), sq = Eigen::VectorXd::Zero(k);
    for (int pass = 0; pass < n_passes; ++pass) {
        Rng rng(sample_seed(seed, static_cast<std::size_t>(pass)));
        const Eigen::VectorXd probs
            = softmax(forward_conv_one(model, kernels, input, stochastic ? &rng : nullptr));
        if (pass == 0)
            first = probs;
        const Eigen::VectorXd dev = probs - first;
        sum += dev;
        sq += dev.cwiseProduct(dev);
    }
    const double n = n_passes;
    PredictionWithConfidence out;
    const Eigen::VectorXd mean_dev = sum / n;
    out.mean = first + mean_dev;
    out.stddev = (sq / n - mean_dev.cwiseProduct(mean_dev)).cwiseMax(0.0).cwiseSqrt();
    Index arg = 0;
    out.mean.maxCoeff(&arg);
    out.label = static_cast<int>(arg);
    return out;
}

} // namespace mibci::classify
