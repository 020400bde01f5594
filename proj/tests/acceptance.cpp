#include "classify/bundle.hpp"
#include "classify/s4d_forward.hpp"
#include "classify/s4d_train.hpp"
#include "common/error.hpp"
#include "features/csp.hpp"
#include "features/windowing.hpp"
#include "runtime/itr.hpp"
#include "runtime/latency.hpp"
#include "runtime/sources.hpp"
#include "sessions/live_session.hpp"
#include "sessions/offline_train.hpp"
#include "sessions/synth.hpp"
#include "signal/asr.hpp"
#include "signal/filter.hpp"
#include "signal/recording.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

using namespace mibci;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& body)
{
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::filesystem::path work_dir()
{
    const auto dir = std::filesystem::temp_directory_path() / "mibci_acceptance";
    std::filesystem::create_directories(dir);
    return dir;
}

std::string read_bytes(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Eigen::MatrixXd random_matrix(classify::Rng& rng, Eigen::Index rows, Eigen::Index cols)
{
    Eigen::MatrixXd x(rows, cols);
    for (Eigen::Index i = 0; i < x.size(); ++i)
        x.data()[i] = rng.normal();
    return x;
}

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    return (a - b).norm() / std::max(b.norm(), 1e-300);
}

Outcome duality()
{
    const auto t0 = Clock::now();
    classify::Rng rng(2024);
    double worst = 0.0;
    for (int m = 0; m < 50; ++m) {
        classify::S4dConfig cfg;
        cfg.hidden = 1 + static_cast<int>(rng.next() % 64);
        cfg.state = 1 + static_cast<int>(rng.next() % 32);
        cfg.input_dim = 1 + static_cast<Eigen::Index>(rng.next() % 16);
        cfg.n_layers = 1 + static_cast<int>(rng.next() % 3);
        cfg.n_classes = 2 + static_cast<int>(rng.next() % 3);
        cfg.bidirectional = rng.next() % 2 == 0;
        classify::S4dModel model = classify::s4d_init(cfg, rng.next());
        for (double& p : model.params())
            p += 0.05 * rng.normal();
        const Eigen::MatrixXd x = random_matrix(rng, cfg.input_dim, 256);
        const Eigen::VectorXd conv = classify::s4d_forward_conv(model, {x}).row(0).transpose();
        const Eigen::VectorXd rec = classify::s4d_forward_recurrent(model, x);
        worst = std::max(worst, relative_error(rec, conv));
    }
    const double elapsed = seconds_since(t0);
    return {worst < 1e-4 && elapsed < 60.0,
        fmt("50 models, L=256, max relative error %.3g (< 1e-4), %.1f s (< 60 s)", worst, elapsed)};
}

Outcome gradients()
{
    const auto t0 = Clock::now();
    classify::S4dConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden = 2;
    cfg.state = 2;
    cfg.n_classes = 3;
    cfg.dropout = 0.0;
    classify::S4dModel model = classify::s4d_init(cfg, 7);
    classify::Rng rng(11);
    for (double& p : model.params())
        p += 0.1 * rng.normal();
    std::vector<Eigen::MatrixXd> xs {random_matrix(rng, 3, 8), random_matrix(rng, 3, 8)};
    const std::vector<const Eigen::MatrixXd*> batch {&xs[0], &xs[1]};
    const std::vector<int> labels {0, 2};
    std::vector<double> grad;
    classify::loss_and_gradient(model, batch, labels, grad, 0, false);
    double worst = 0.0;
    std::string worst_group;
    for (const auto& slot : model.layout().slots) {
        Eigen::VectorXd analytic(static_cast<Eigen::Index>(slot.size())), numeric(analytic.size());
        for (std::size_t i = 0; i < slot.size(); ++i) {
            const std::size_t k = slot.offset + i;
            const double saved = model.params()[k];
            const double h = 1e-5 * std::max(1.0, std::abs(saved));
            model.params()[k] = saved + h;
            const double up = classify::batch_loss(model, batch, labels, 0, false);
            model.params()[k] = saved - h;
            const double down = classify::batch_loss(model, batch, labels, 0, false);
            model.params()[k] = saved;
            numeric(static_cast<Eigen::Index>(i)) = (up - down) / (2 * h);
            analytic(static_cast<Eigen::Index>(i)) = grad[k];
        }
        const double err = relative_error(analytic, numeric);
        if (err >= worst) {
            worst = err;
            worst_group = slot.name;
        }
    }
    const double elapsed = seconds_since(t0);
    return {worst < 1e-3 && elapsed < 60.0,
        fmt("H=2 N=2 T=8, %zu parameter groups, worst relative error %.3g in %s (< 1e-3), %.2f s",
            model.layout().slots.size(), worst, worst_group.c_str(), elapsed)};
}

Outcome csp_properties()
{
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 1.0);
    signal::EpochSet s;
    s.class_names = {"a", "b"};
    for (int c = 0; c < 6; ++c)
        s.channel_names.push_back("E" + std::to_string(c));
    for (int i = 0; i < 80; ++i) {
        Eigen::MatrixXd e(6, 250);
        for (Eigen::Index k = 0; k < e.size(); ++k)
            e.data()[k] = n(rng);
        const int label = i % 2;
        if (label == 0)
            e.row(0) *= std::sqrt(10.0);
        s.epochs.push_back(e);
        s.labels.push_back(label);
    }
    const auto m = features::csp_fit(s, 4);
    double whitening = 0.0, off_diagonal = 0.0;
    for (std::size_t c = 0; c < m.filters.size(); ++c) {
        const Eigen::MatrixXd& w = m.filters[c];
        const Eigen::MatrixXd white = w.transpose() * (m.class_cov[c] + m.rest_cov[c]) * w;
        whitening = std::max(whitening, (white - Eigen::MatrixXd::Identity(w.cols(), w.cols())).cwiseAbs().maxCoeff());
        Eigen::MatrixXd d = w.transpose() * m.class_cov[c] * w;
        d.diagonal().setZero();
        off_diagonal = std::max(off_diagonal, d.cwiseAbs().maxCoeff());
    }
    const double top = std::abs(m.filters[0].col(0).normalized()(0));
    return {whitening < 1e-6 && off_diagonal < 1e-6 && top > 0.9,
        fmt("whitening error %.2g, off-diagonal %.2g (< 1e-6), planted channel |w1| = %.4f (> 0.9)", whitening,
            off_diagonal, top)};
}

Outcome filter_response()
{
    const auto f = signal::design_bandpass({}, 4);
    const auto db = [&](double hz) { return 20.0 * std::log10(std::abs(f.response(hz, 250.0))); };
    const double at50 = db(50.0), at0 = db(0.0);
    double ripple = 0.0;
    for (double hz = 8.0; hz <= 30.0 + 1e-9; hz += 0.05)
        ripple = std::max(ripple, std::abs(db(hz)));

    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 20.0);
    Eigen::MatrixXd x(4, 5000);
    for (Eigen::Index i = 0; i < x.size(); ++i)
        x.data()[i] = n(rng);
    auto offline = f;
    Eigen::MatrixXd whole = x;
    offline.process(whole);
    int identical = 0;
    std::uniform_int_distribution<Eigen::Index> len(1, 400);
    for (int trial = 0; trial < 100; ++trial) {
        auto stream = signal::design_bandpass({}, 4);
        Eigen::MatrixXd out(4, x.cols());
        for (Eigen::Index t = 0; t < x.cols();) {
            const Eigen::Index l = std::min(len(rng), x.cols() - t);
            Eigen::MatrixXd block = x.middleCols(t, l);
            stream.process(block);
            out.middleCols(t, l) = block;
            t += l;
        }
        identical += out == whole ? 1 : 0;
    }
    return {at50 <= -40.0 && at0 <= -40.0 && ripple <= 1.0 && identical == 100,
        fmt("50 Hz %.2f dB, DC %.2f dB (<= -40), 8-30 Hz deviation %.3f dB (<= 1), %d/100 chunkings bit-identical",
            at50, at0, ripple, identical)};
}

Outcome asr()
{
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 5.0);
    Eigen::MatrixXd cal(8, 250 * 60);
    for (Eigen::Index i = 0; i < cal.size(); ++i)
        cal.data()[i] = n(rng);
    const auto model = signal::asr_calibrate(cal, 250.0);

    double worst_reduction = 1.0, worst_clean = 0.0, clean_diff = 0.0;
    std::vector<double> changes;
    std::uniform_int_distribution<int> channel(0, 7);
    for (int trial = 0; trial < 40; ++trial) {
        signal::SampleChunk clean;
        clean.samples.resize(8, 125);
        for (Eigen::Index i = 0; i < clean.samples.size(); ++i)
            clean.samples.data()[i] = n(rng);
        clean_diff = std::max(clean_diff, (signal::asr_process(model, clean).samples - clean.samples).cwiseAbs().maxCoeff());

        const int c = channel(rng);
        signal::SampleChunk burst = clean;
        burst.samples.row(c) *= 50.0;
        const Eigen::MatrixXd out = signal::asr_process(model, burst).samples;
        worst_reduction = std::min(worst_reduction, 1.0 - out.row(c).norm() / burst.samples.row(c).norm());
        for (Eigen::Index k = 0; k < 8; ++k) {
            if (k == c)
                continue;
            const double rms = clean.samples.row(k).norm();
            changes.push_back(std::abs(out.row(k).norm() - rms) / rms);
            worst_clean = std::max(worst_clean, changes.back());
        }
    }
    std::sort(changes.begin(), changes.end());
    return {worst_reduction >= 0.8 && worst_clean < 0.05 && clean_diff == 0.0,
        fmt("40 bursts: worst burst RMS reduction %.1f%% (>= 80%%), worst clean-channel RMS change %.2f%% (< 5%%, "
            "median %.2f%%), clean windows max difference %.3g (== 0)",
            100.0 * worst_reduction, 100.0 * worst_clean, 100.0 * changes[changes.size() / 2], clean_diff)};
}

Outcome window_counts()
{
    auto count = [](std::size_t epochs) {
        signal::EpochSet s;
        s.class_names = {"a", "b", "c"};
        s.channel_names = {"E0"};
        for (std::size_t i = 0; i < epochs; ++i) {
            s.epochs.push_back(Eigen::MatrixXd::Zero(1, 750));
            s.labels.push_back(static_cast<int>(i % 3));
        }
        return features::window_epochs(s).size();
    };
    const std::size_t a = count(190), b = count(720);
    return {a == 760 && b == 2880, fmt("190 epochs -> %zu windows (760), 720 -> %zu (2880)", a, b)};
}

Outcome itr()
{
    const double a = runtime::compute_itr({3, 0.73, 1.617});
    const double b = runtime::compute_itr({3, 0.73, 3.117});
    const double c = runtime::compute_itr({3, 0.73, 4.617});
    const bool ok = std::abs(a - 17.57) <= 0.05 && std::abs(b - 9.11) <= 0.05 && std::abs(c - 6.15) <= 0.05;
    return {ok, fmt("T=1.617 s %.3f (17.57), T=3.117 s %.3f (9.11), T=4.617 s %.3f (6.15) bits/min, tol 0.05", a, b, c)};
}

struct Shared {
    std::filesystem::path dir = work_dir();
    std::filesystem::path bundle_a, bundle_b, report_a, report_b;
    bool trained = false;
    std::vector<runtime::LatencyEntry> ledger;
};

sessions::TrainOptions train_options(const Shared& s, const std::string& tag)
{
    sessions::TrainOptions o;
    o.recordings = {s.dir / "train.rec"};
    o.calibration = s.dir / "calibration.rec";
    o.mapping = s.dir / "mapping.json";
    o.output = s.dir / ("model_" + tag + ".bundle");
    o.report = s.dir / ("report_" + tag + ".json");
    o.seed = 1;
    return o;
}

Outcome end_to_end(Shared& s)
{
    const auto t0 = Clock::now();
    sessions::SynthSession session;
    session.config = sessions::SynthConfig::defaults(0.5, 7);
    session.n_per_class = 40;
    session.seed = 7;
    signal::save_recording(session.generate(), s.dir / "train.rec");
    signal::save_recording(
        sessions::synth_calibration(sessions::SynthConfig::defaults(0.5, 8)), s.dir / "calibration.rec");
    signal::save_mapping({{"left", "left"}, {"rest", "rest"}, {"right", "right"}}, s.dir / "mapping.json");
    const auto o = train_options(s, "a");
    const auto out = sessions::cli_train(o);
    const double elapsed = seconds_since(t0);
    s.bundle_a = o.output;
    s.report_a = o.report;
    s.trained = true;
    return {out.evaluation.accuracy >= 0.90 && elapsed < 600.0,
        fmt("3 classes x 40 trials, erd 0.5: window accuracy %.3f (>= 0.90) on %zu test windows, trial accuracy "
            "%.3f, %d epochs, %.0f s (< 600 s)",
            out.evaluation.accuracy, out.test_windows, out.evaluation.trial_accuracy,
            out.bundle.s4d->meta.epochs_run, elapsed)};
}

Outcome closed_loop(Shared& s)
{
    if (!s.trained)
        return {false, "no trained bundle (criterion 8 failed to produce one)"};
    constexpr double kFactor = 1.5;
    sessions::SynthSession held_out;
    held_out.config = sessions::SynthConfig::defaults(0.5, 99);
    held_out.n_per_class = 14;
    held_out.seed = 99;
    auto bundle = std::make_shared<const classify::ModelBundle>(classify::load_model(s.bundle_a));
    sessions::LiveOptions options;
    options.pipeline = sessions::pipeline_config_from_json(nlohmann::json::object(), bundle->class_names, 1);
    options.qte = true;
    sessions::LiveSession live(bundle, std::make_unique<runtime::ReplaySource>(held_out.generate(), kFactor), options);
    live.start();
    live.wait();
    s.ledger = live.pipeline().ledger();
    const auto& qte = *live.qte();
    const auto trials = qte.trials();
    const double rate = qte.success_rate();
    const auto stats = live.pipeline().stats();
    const auto j = qte.to_json().at("classes");
    std::string per_class;
    for (const auto& [cls, c] : j.items())
        per_class += fmt(" %s %d/%d", cls.c_str(), c.at("successes").get<int>(), c.at("attempts").get<int>());
    return {trials.size() == 42 && rate >= 0.80,
        fmt("held-out session, replay x%.1f: %zu/%zu quick-time events succeeded, rate %.3f (>= 0.80);%s; "
            "%llu frames, %llu dropped messages",
            kFactor, qte.successes(), trials.size(), rate, per_class.c_str(),
            static_cast<unsigned long long>(stats.frames), static_cast<unsigned long long>(stats.dropped()))};
}

Outcome latency(const Shared& s)
{
    if (s.ledger.empty())
        return {false, "no ledger (criterion 9 did not run the pipeline)"};
    std::size_t nonmonotonic = 0;
    for (const auto& e : s.ledger)
        for (std::size_t st = 0; st < runtime::kStageCount; ++st)
            if (e.done[st] < e.start[st] || (st > 0 && e.start[st] < e.done[st - 1]))
                ++nonmonotonic;
    const auto r = runtime::latency_report(s.ledger);
    const auto j = r.to_json();
    bool schema = j.contains("total") && j.contains("stages");
    for (const char* stage : {"acquisition", "preprocessing", "classification", "transfer"}) {
        const auto& stages = j.at("stages");
        schema = schema && stages.contains(stage) && stages.at(stage).contains("median_ms")
            && stages.at(stage).contains("p95_ms") && stages.at(stage).contains("p99_ms");
    }
    schema = schema && j.at("total").contains("median_ms") && j.at("total").contains("p95_ms");
    return {nonmonotonic == 0 && r.accounting_violations == 0 && r.monotonicity_violations == 0 && schema,
        fmt("%zu messages, %zu non-monotonic stamps, %zu accounting violations (total >= sum of compute); "
            "total median %.2f ms, p95 %.2f ms (reference 117.24 ms, informational)",
            r.messages, nonmonotonic, r.accounting_violations, 1000.0 * r.total.median, 1000.0 * r.total.p95)};
}

Outcome determinism(Shared& s)
{
    if (!s.trained)
        return {false, "no first training run to compare against"};
    const auto o = train_options(s, "b");
    sessions::cli_train(o);
    const std::string a = read_bytes(s.bundle_a), b = read_bytes(o.output);
    const std::string ra = read_bytes(s.report_a), rb = read_bytes(o.report);
    return {!a.empty() && a == b && !ra.empty() && ra == rb,
        fmt("bundle %zu bytes %s, report %zu bytes %s across two seeded runs", a.size(),
            a == b ? "identical" : "DIFFERENT", ra.size(), ra == rb ? "identical" : "DIFFERENT")};
}

} // namespace

int main()
{
    Shared shared;
    report(1, "S4D duality", duality);
    report(2, "gradient correctness", gradients);
    report(3, "CSP properties", csp_properties);
    report(4, "filter", filter_response);
    report(5, "ASR", asr);
    report(6, "window counts", window_counts);
    report(7, "ITR", itr);
    report(8, "end-to-end synthetic training", [&] { return end_to_end(shared); });
    report(9, "online closed loop", [&] { return closed_loop(shared); });
    report(10, "latency report", [&] { return latency(shared); });
    report(11, "determinism", [&] { return determinism(shared); });
    return failures == 0 ? 0 : 1;
}
