#include "classify/baselines.hpp"
#include "classify/bundle.hpp"
#include "classify/evaluate.hpp"
#include "classify/s4d_forward.hpp"
#include "classify/s4d_train.hpp"

#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

using namespace mibci;
using namespace mibci::classify;
using features::FeatureTensor;

namespace {

// Three Gaussian blobs in 6 dimensions presented as constant sequences.
FeatureTensor blobs(std::size_t per_class, Eigen::Index steps, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 0.3);
    FeatureTensor t;
    t.class_names = {"a", "b", "c"};
    t.morlet_channels = 6;
    for (std::size_t i = 0; i < 3 * per_class; ++i) {
        const int label = static_cast<int>(i % 3);
        Eigen::VectorXd v(6);
        for (Eigen::Index d = 0; d < 6; ++d)
            v(d) = n(rng) + (d == 2 * label ? 2.0 : 0.0);
        t.sequences.push_back(v.replicate(1, steps));
        t.labels.push_back(label);
        t.parent.push_back(i / 2);
        t.offset.push_back(0);
    }
    return t;
}

S4dConfig small_config(Eigen::Index input_dim)
{
    S4dConfig cfg;
    cfg.input_dim = input_dim;
    cfg.hidden = 8;
    cfg.state = 4;
    cfg.dropout = 0.1;
    return cfg;
}

} // namespace

TEST_CASE("S4D learns separable blobs")
{
    const FeatureTensor data = blobs(30, 12, 1);
    TrainConfig tc;
    tc.max_epochs = 50;
    tc.learning_rate = 1e-2;
    tc.batch_size = 16;
    tc.seed = 3;
    const TrainResult r = train(s4d_init(small_config(6), 3), data, {}, tc);
    const EvalResult e = evaluate(r.model, data);
    CHECK(e.accuracy >= 0.99);
    CHECK(r.report.epochs.size() <= 50);
}

TEST_CASE("training is deterministic for a fixed seed")
{
    const FeatureTensor data = blobs(10, 8, 2);
    TrainConfig tc;
    tc.max_epochs = 5;
    tc.seed = 11;
    const TrainResult a = train(s4d_init(small_config(6), 1), data, data, tc);
    const TrainResult b = train(s4d_init(small_config(6), 1), data, data, tc);
    CHECK(a.model.params() == b.model.params());
    CHECK(a.report.to_json().dump() == b.report.to_json().dump());
}

TEST_CASE("training rejects bad inputs")
{
    const FeatureTensor data = blobs(5, 8, 2);
    TrainConfig tc;
    CHECK_THROWS_AS(train(s4d_init(small_config(5), 1), data, {}, tc), Error);
    tc.learning_rate = 0.0;
    CHECK_THROWS_AS(train(s4d_init(small_config(6), 1), data, {}, tc), Error);
}

TEST_CASE("forward symmetries")
{
    S4dConfig cfg = small_config(6);
    const S4dModel model = s4d_init(cfg, 5);
    const Eigen::MatrixXd logits = s4d_forward_conv(model, {Eigen::MatrixXd::Zero(6, 16)});
    CHECK(logits.maxCoeff() == logits.minCoeff());

    const FeatureTensor data = blobs(6, 10, 4);
    const Eigen::MatrixXd batch = s4d_forward_conv(model, data.sequences);
    const Eigen::MatrixXd single = s4d_forward_conv(model, {data.sequences[7]});
    CHECK(batch.row(7) == single.row(0));

    S4dStream stream(model, 10);
    std::optional<Eigen::VectorXd> out;
    for (Eigen::Index t = 0; t < 10; ++t)
        out = stream.push(data.sequences[3].col(t));
    REQUIRE(out.has_value());
    CHECK((*out - batch.row(3).transpose()).norm() <= 1e-4 * batch.row(3).norm());
}

TEST_CASE("recurrent stepper starts from zero")
{
    const S4dModel model = s4d_init(small_config(6), 5);
    SsmStepper step(model, 0, 0);
    const Eigen::VectorXd first = step.step(Eigen::VectorXd::Ones(8));
    step.step(Eigen::VectorXd::Ones(8));
    step.reset();
    CHECK(step.step(Eigen::VectorXd::Ones(8)) == first);
    SsmStepper zero(model, 1, 1);
    CHECK(zero.step(Eigen::VectorXd::Zero(8)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("evaluation arithmetic")
{
    const std::vector<int> truth {0, 1, 2, 0, 1, 2};
    const EvalResult perfect = evaluate_predictions(truth, truth, {}, 3);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.confusion == Eigen::Matrix3i::Identity() * 2);

    std::mt19937_64 rng(1);
    std::vector<int> t, p;
    std::vector<std::size_t> parents;
    for (int i = 0; i < 1200; ++i) {
        t.push_back(i % 3);
        p.push_back(static_cast<int>(rng() % 3));
        parents.push_back(static_cast<std::size_t>(i / 4));
    }
    const EvalResult random = evaluate_predictions(t, p, {}, 3);
    CHECK(std::abs(random.accuracy - 1.0 / 3.0) < 0.05);
    CHECK(random.confusion.sum() == 1200);
    CHECK_THROWS_AS(evaluate_predictions({}, {}, {}, 3), Error);

    const std::vector<int> votes_truth {1, 1, 1, 1, 0, 0, 0, 0};
    const std::vector<int> votes_pred {1, 1, 0, 2, 0, 1, 1, 1};
    const std::vector<std::size_t> vp {0, 0, 0, 0, 1, 1, 1, 1};
    CHECK(evaluate_predictions(votes_truth, votes_pred, vp, 3).trial_accuracy == 0.5);
}

TEST_CASE("baselines")
{
    const FeatureTensor data = blobs(30, 4, 7);
    const Eigen::MatrixXd x = pool_features(data);
    BaselineOptions one;
    one.k = 1;
    const BaselineModel knn = baseline_fit(BaselineKind::kKnn, x, data.labels, 3, one);
    CHECK(baseline_predict(knn, x) == data.labels);
    BaselineOptions huge;
    huge.k = 1000;
    CHECK_THROWS_AS(baseline_fit(BaselineKind::kKnn, x, data.labels, 3, huge), Error);

    const BaselineModel linear = baseline_fit(BaselineKind::kLinear, x, data.labels, 3);
    const auto pred = baseline_predict(linear, x);
    const EvalResult e = evaluate_predictions(data.labels, pred, {}, 3);
    CHECK(e.accuracy >= 0.99);
    CHECK(std::abs(baseline_probs(linear, x.row(0).transpose()).sum() - 1.0) < 1e-9);
}

TEST_CASE("bundle round trip, truncation and version checks")
{
    ModelBundle b;
    b.s4d = s4d_init(small_config(6), 9);
    b.features.use_csp = false;
    b.channel_names = {"C3", "Cz", "C4"};
    b.class_names = {"a", "b", "c"};
    b.mapping = {{"left", "a"}};
    b.normalization.mean = {1, 2, 3};
    b.normalization.stddev = {4, 5, 6};
    const auto bytes = encode_bundle(b);
    CHECK(encode_bundle(b) == bytes);
    const ModelBundle back = decode_bundle(bytes);
    REQUIRE(back.s4d.has_value());
    CHECK(back.s4d->params() == b.s4d->params());
    CHECK(encode_bundle(back) == bytes);

    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        Eigen::MatrixXd x(6, 5);
        for (Eigen::Index k = 0; k < x.size(); ++k)
            x.data()[k] = n(rng);
        CHECK(s4d_forward_conv(*back.s4d, {x}) == s4d_forward_conv(*b.s4d, {x}));
    }

    for (std::size_t cut : {std::size_t {3}, std::size_t {30}, bytes.size() / 2, bytes.size() - 1}) {
        try {
            decode_bundle(std::span(bytes.data(), cut));
            FAIL("truncated bundle decoded");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::kParse);
        }
    }
    auto wrong_version = bytes;
    wrong_version[8] = 9;
    try {
        decode_bundle(wrong_version);
        FAIL("version mismatch accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kVersion);
    }
}

TEST_CASE("bundle requires CSP when the feature config uses it")
{
    ModelBundle b;
    b.s4d = s4d_init(small_config(6), 9);
    b.features.use_csp = false;
    b.class_names = {"a", "b", "c"};
    auto bytes = encode_bundle(b);
    const std::string needle = "\"use_csp\":false";
    std::string text(bytes.begin(), bytes.end());
    const auto pos = text.find(needle);
    REQUIRE(pos != std::string::npos);
    // Same length replacement keeps the header offsets valid.
    const std::string patched = "\"use_csp\":true ";
    std::copy(patched.begin(), patched.end(), bytes.begin() + static_cast<std::ptrdiff_t>(pos));
    CHECK_THROWS_AS(decode_bundle(bytes), Error);
}

TEST_CASE("baseline bundle round trip")
{
    const FeatureTensor data = blobs(10, 4, 7);
    const Eigen::MatrixXd x = pool_features(data);
    ModelBundle b;
    b.baseline = baseline_fit(BaselineKind::kLinear, x, data.labels, 3);
    b.features.use_csp = false;
    b.class_names = {"a", "b", "c"};
    const ModelBundle back = decode_bundle(encode_bundle(b));
    REQUIRE(back.baseline.has_value());
    CHECK(baseline_predict(back.baseline.value(), x) == baseline_predict(b.baseline.value(), x));
}
