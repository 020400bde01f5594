#include "classify/s4d_forward.hpp"
#include "classify/s4d_train.hpp"

#include <doctest.h>

#include <cmath>

using namespace mibci;
using namespace mibci::classify;

namespace {

Eigen::MatrixXd random_sequence(Rng& rng, Eigen::Index rows, Eigen::Index cols)
{
    Eigen::MatrixXd x(rows, cols);
    for (Eigen::Index i = 0; i < x.size(); ++i)
        x.data()[i] = rng.normal();
    return x;
}

S4dConfig tiny_config()
{
    S4dConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden = 2;
    cfg.state = 2;
    cfg.n_layers = 3;
    cfg.dropout = 0.0;
    return cfg;
}

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    return (a - b).norm() / std::max(b.norm(), 1e-12);
}

} // namespace

TEST_CASE("finite differences agree with the analytic gradient for every parameter group")
{
    S4dModel model = s4d_init(tiny_config(), 7);
    Rng rng(11);
    // Move the parameters away from the structured initialization.
    for (double& p : model.params())
        p += 0.1 * rng.normal();
    std::vector<Eigen::MatrixXd> xs {random_sequence(rng, 3, 8), random_sequence(rng, 3, 8)};
    std::vector<const Eigen::MatrixXd*> batch {&xs[0], &xs[1]};
    const std::vector<int> labels {0, 2};

    std::vector<double> grad;
    loss_and_gradient(model, batch, labels, grad, 0, false);
    REQUIRE(grad.size() == model.params().size());

    for (const auto& slot : model.layout().slots) {
        Eigen::VectorXd analytic(static_cast<Eigen::Index>(slot.size()));
        Eigen::VectorXd numeric(static_cast<Eigen::Index>(slot.size()));
        for (std::size_t i = 0; i < slot.size(); ++i) {
            const std::size_t k = slot.offset + i;
            const double h = 1e-5 * std::max(1.0, std::abs(model.params()[k]));
            const double saved = model.params()[k];
            model.params()[k] = saved + h;
            const double up = batch_loss(model, batch, labels, 0, false);
            model.params()[k] = saved - h;
            const double down = batch_loss(model, batch, labels, 0, false);
            model.params()[k] = saved;
            numeric(static_cast<Eigen::Index>(i)) = (up - down) / (2 * h);
            analytic(static_cast<Eigen::Index>(i)) = grad[k];
        }
        INFO(slot.name);
        CHECK(relative_error(analytic, numeric) < 1e-3);
    }
}

TEST_CASE("gradient with dropout matches finite differences under fixed draws")
{
    S4dConfig cfg = tiny_config();
    cfg.dropout = 0.3;
    S4dModel model = s4d_init(cfg, 3);
    Rng rng(5);
    std::vector<Eigen::MatrixXd> xs {random_sequence(rng, 3, 8)};
    std::vector<const Eigen::MatrixXd*> batch {&xs[0]};
    const std::vector<int> labels {1};
    std::vector<double> grad;
    loss_and_gradient(model, batch, labels, grad, 99, true);
    Eigen::VectorXd analytic(static_cast<Eigen::Index>(grad.size())), numeric(analytic.size());
    for (std::size_t k = 0; k < grad.size(); ++k) {
        const double saved = model.params()[k];
        const double h = 1e-5 * std::max(1.0, std::abs(saved));
        model.params()[k] = saved + h;
        const double up = batch_loss(model, batch, labels, 99, true);
        model.params()[k] = saved - h;
        const double down = batch_loss(model, batch, labels, 99, true);
        model.params()[k] = saved;
        numeric(static_cast<Eigen::Index>(k)) = (up - down) / (2 * h);
        analytic(static_cast<Eigen::Index>(k)) = grad[k];
    }
    CHECK(relative_error(analytic, numeric) < 1e-3);
}

TEST_CASE("recurrent and convolutional forwards agree")
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        S4dConfig cfg;
        cfg.input_dim = 6;
        cfg.hidden = 8 + static_cast<int>(seed);
        cfg.state = 4 + static_cast<int>(seed);
        S4dModel model = s4d_init(cfg, seed);
        Rng rng(seed + 100);
        const Eigen::MatrixXd x = random_sequence(rng, 6, 64);
        const Eigen::VectorXd conv = s4d_forward_conv(model, {x}).row(0).transpose();
        const Eigen::VectorXd rec = s4d_forward_recurrent(model, x);
        CHECK(relative_error(rec, conv) < 1e-4);
    }
}

TEST_CASE("stable state matrix for any free parameter")
{
    S4dModel model = s4d_init(tiny_config(), 1);
    const auto& lay = model.layout();
    for (const auto& layer : lay.layers)
        for (const auto& dir : layer.dir)
            for (Eigen::Index i = 0; i < 4; ++i)
                model.params()[dir.a_re + static_cast<std::size_t>(i)] = i % 2 ? -50.0 : 50.0;
    for (int l = 0; l < 3; ++l)
        for (int d = 0; d < 2; ++d)
            for (Eigen::Index h = 0; h < 2; ++h)
                for (Eigen::Index n = 0; n < 2; ++n) {
                    const cplx a = model.state_entry(l, d, h, n);
                    CHECK(a.real() < 0.0);
                    CHECK(std::abs(std::exp(model.timestep(l, d, h) * a)) < 1.0);
                }
}

TEST_CASE("softmax outputs lie on the simplex")
{
    S4dConfig cfg = tiny_config();
    cfg.dropout = 0.2;
    const S4dModel model = s4d_init(cfg, 2);
    Rng rng(1);
    const auto pred = mc_dropout_predict(model, random_sequence(rng, 3, 16), 20, 4);
    CHECK(std::abs(pred.mean.sum() - 1.0) < 1e-6);
    CHECK((pred.mean.array() >= 0).all());
}

TEST_CASE("mc dropout without dropout has zero spread and equals the deterministic forward")
{
    const S4dModel model = s4d_init(tiny_config(), 2);
    Rng rng(8);
    const Eigen::MatrixXd x = random_sequence(rng, 3, 16);
    const auto pred = mc_dropout_predict(model, x, 20, 4);
    CHECK(pred.stddev.maxCoeff() == 0.0);
    const Eigen::VectorXd direct = softmax(s4d_forward_conv(model, {x}).row(0).transpose());
    CHECK((pred.mean - direct).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mc dropout estimates converge")
{
    S4dConfig cfg = tiny_config();
    cfg.dropout = 0.3;
    const S4dModel model = s4d_init(cfg, 6);
    Rng rng(3);
    const Eigen::MatrixXd x = random_sequence(rng, 3, 16);
    const auto a = mc_dropout_predict(model, x, 1000, 1);
    const auto b = mc_dropout_predict(model, x, 1000, 2);
    for (Eigen::Index c = 0; c < a.mean.size(); ++c)
        CHECK(std::abs(a.mean(c) - b.mean(c)) <= 3.0 * a.stddev(c) / std::sqrt(1000.0) + 1e-12);
}

TEST_CASE("mc dropout rejects fewer than two passes")
{
    const S4dModel model = s4d_init(tiny_config(), 2);
    CHECK_THROWS_AS(mc_dropout_predict(model, Eigen::MatrixXd::Zero(3, 4), 1), Error);
}

TEST_CASE("initialization is deterministic per seed")
{
    const S4dModel a = s4d_init(tiny_config(), 42);
    const S4dModel b = s4d_init(tiny_config(), 42);
    const S4dModel c = s4d_init(tiny_config(), 43);
    CHECK(a.params() == b.params());
    CHECK(a.params() != c.params());
}
