#include "classify/bundle.hpp"
#include "common/error.hpp"
#include "runtime/sources.hpp"
#include "sessions/cue_schedule.hpp"
#include "sessions/live_session.hpp"
#include "sessions/offline_train.hpp"
#include "sessions/paradigm.hpp"
#include "sessions/qte_harness.hpp"
#include "sessions/synth.hpp"
#include "signal/recording.hpp"

#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

using namespace mibci;
using namespace mibci::sessions;

namespace {

std::filesystem::path scratch(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / "mibci_test_sessions";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::string read_bytes(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Mean DFT power over [lo, hi] Hz of one row segment.
double band_power(const Eigen::RowVectorXd& x, double fs, double lo, double hi)
{
    const auto n = x.size();
    double total = 0.0;
    int bins = 0;
    for (Eigen::Index k = 1; k < n / 2; ++k) {
        const double f = static_cast<double>(k) * fs / static_cast<double>(n);
        if (f < lo || f > hi)
            continue;
        std::complex<double> acc = 0.0;
        for (Eigen::Index t = 0; t < n; ++t)
            acc += x(t) * std::polar(1.0, -2.0 * M_PI * static_cast<double>(k * t) / static_cast<double>(n));
        total += std::norm(acc);
        ++bins;
    }
    return total / bins;
}

// Ratio of C4 alpha power in left-task segments to rest-task segments.
double erd_ratio(double erd, std::uint64_t seed)
{
    const SynthConfig cfg = SynthConfig::defaults(erd, seed);
    const CueSchedule schedule = generate_cue_sequence({"left", "rest"}, 40, seed);
    const auto rec = synth_generate(cfg, schedule, schedule.duration_s());
    const auto c4 = static_cast<Eigen::Index>(*rec.montage.index_of("C4"));
    std::map<std::string, double> power;
    for (const auto& cue : schedule.cues) {
        const auto start = static_cast<Eigen::Index>(std::llround((cue.onset_s + 1.0) * 250.0));
        power[cue.cls] += band_power(rec.samples.row(c4).segment(start, 750), 250.0, 8.0, 12.0);
    }
    return power["left"] / power["rest"];
}

// Emits `chunks` chunks of a short recording, then reports exhaustion.
class ShortSource final : public runtime::StreamSource {
public:
    ShortSource(const signal::Recording& rec, int chunks) : inner_(rec, 0.0), remaining_(chunks) {}
    const signal::Montage& montage() const override { return inner_.montage(); }
    std::optional<runtime::SourceChunk> next() override
    {
        if (remaining_-- <= 0)
            return std::nullopt;
        return inner_.next();
    }
    void interrupt() override {}

private:
    runtime::ReplaySource inner_;
    int remaining_;
};

// Delivers one chunk, then stalls longer than the paradigm timeout.
class StallingSource final : public runtime::StreamSource {
public:
    explicit StallingSource(const signal::Recording& rec) : inner_(rec, 0.0) {}
    const signal::Montage& montage() const override { return inner_.montage(); }
    std::optional<runtime::SourceChunk> next() override
    {
        if (served_++ > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(300));
        return inner_.next();
    }
    void interrupt() override {}

private:
    runtime::ReplaySource inner_;
    int served_ = 0;
};

runtime::ControlFrame frame(const std::string& label, int index, double p, double ts)
{
    runtime::ControlFrame f;
    f.label = label;
    f.label_index = index;
    f.probs = Eigen::VectorXd::Constant(3, (1.0 - p) / 2.0);
    f.probs(index) = p;
    f.ts = ts;
    return f;
}

} // namespace

TEST_CASE("cue schedule: balanced, spaced and seeded")
{
    const auto s = generate_cue_sequence({"left", "rest", "right"}, 10, 42);
    REQUIRE(s.cues.size() == 30);
    std::map<std::string, int> counts;
    for (const auto& c : s.cues)
        ++counts[c.cls];
    CHECK(counts["left"] == 10);
    CHECK(counts["rest"] == 10);
    CHECK(counts["right"] == 10);
    for (std::size_t i = 1; i < s.cues.size(); ++i)
        CHECK(s.cues[i].onset_s - s.cues[i - 1].onset_s >= s.phases.cue_s + s.phases.task_s + s.phases.break_s);
    const auto again = generate_cue_sequence({"left", "rest", "right"}, 10, 42);
    for (std::size_t i = 0; i < s.cues.size(); ++i)
        CHECK(again.cues[i].cls == s.cues[i].cls);
    CHECK_THROWS_AS(generate_cue_sequence({"left"}, 0, 1), Error);
}

TEST_CASE("cue schedule: run length never exceeds three over 10000 schedules")
{
    std::size_t longest = 0;
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
        const auto s = generate_cue_sequence({"left", "rest", "right"}, 10, seed);
        std::size_t run = 1;
        for (std::size_t i = 1; i < s.cues.size(); ++i) {
            run = s.cues[i].cls == s.cues[i - 1].cls ? run + 1 : 1;
            longest = std::max(longest, run);
        }
    }
    CHECK(longest <= kMaxRunLength);
    CHECK(longest >= 2);
}

TEST_CASE("cue schedule: markers follow the trial phases")
{
    const auto s = generate_cue_sequence({"left", "right"}, 2, 3);
    const auto markers = s.markers();
    REQUIRE(markers.size() == 16);
    const double onset = s.cues[0].onset_s;
    CHECK(markers[0].label == "fixation");
    CHECK(markers[0].timestamp == doctest::Approx(onset - 2.0));
    CHECK(markers[1].label == s.cues[0].cls);
    CHECK(markers[2].label == "task:" + s.cues[0].cls);
    CHECK(markers[2].timestamp == doctest::Approx(onset + 1.0));
    CHECK(markers[3].label == "break");
    CHECK(markers[3].timestamp == doctest::Approx(onset + 4.0));
}

TEST_CASE("synthetic EEG: ERD scales task power by the squared amplitude factor")
{
    for (const double erd : {0.0, 0.3, 0.5}) {
        const double expected = (1.0 - erd) * (1.0 - erd);
        const double ratio = erd_ratio(erd, 21);
        INFO("erd " << erd << " ratio " << ratio);
        if (erd == 0.0)
            CHECK(std::abs(ratio - 1.0) < 0.05);
        CHECK(std::abs(ratio - expected) / expected < 0.15);
    }
}

TEST_CASE("synthetic EEG: fixed seed is bit-identical, duration must cover the schedule")
{
    const auto cfg = SynthConfig::defaults(0.5, 9);
    const auto s = generate_cue_sequence({"left", "rest", "right"}, 2, 9);
    const auto a = synth_generate(cfg, s, s.duration_s());
    const auto b = synth_generate(cfg, s, s.duration_s());
    CHECK(a.samples == b.samples);
    CHECK(a.markers == s.markers());
    CHECK_THROWS_AS(synth_generate(cfg, s, s.duration_s() - 1.0), Error);
    SynthConfig bad = cfg;
    bad.signatures["left"].push_back({"Oz", 10.0, 0.5});
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.signatures["left"][0].erd_fraction = 1.5;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("synthetic EEG: config JSON round-trip")
{
    const auto cfg = SynthConfig::defaults(0.4, 17);
    const auto back = SynthConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
    CHECK_THROWS_AS(SynthConfig::from_json({{"bands_hz", "ten"}}), Error);
}

TEST_CASE("paradigm: schedule markers land in the recording in order")
{
    const auto cfg = SynthConfig::defaults(0.5, 4);
    const auto schedule = generate_cue_sequence({"left", "rest", "right"}, 10, 4);
    auto source_rec = synth_generate(cfg, schedule, schedule.duration_s());
    source_rec.markers.clear();
    runtime::ReplaySource source(source_rec, 0.0);
    ParadigmOptions options;
    options.output = scratch("paradigm.rec");
    std::vector<std::string> cues;
    options.on_cue = [&](const std::string& cls, int ms) {
        cues.push_back(cls);
        CHECK(ms == 1000);
    };
    const auto rec = run_paradigm(schedule, source, options);
    CHECK(rec.samples == source_rec.samples);
    CHECK(rec.markers == schedule.markers());
    std::vector<std::string> tasks;
    for (const auto& m : rec.markers)
        if (m.label.rfind("task:", 0) == 0)
            tasks.push_back(m.label.substr(5));
    REQUIRE(tasks.size() == 30);
    REQUIRE(cues.size() == 30);
    for (std::size_t i = 0; i < 30; ++i) {
        CHECK(tasks[i] == schedule.cues[i].cls);
        CHECK(cues[i] == schedule.cues[i].cls);
    }

    const auto loaded = signal::load_recording(options.output);
    CHECK(loaded.samples == rec.samples);
    CHECK(loaded.markers == rec.markers);
    const auto again = scratch("paradigm_again.rec");
    signal::save_recording(loaded, again);
    CHECK(read_bytes(again) == read_bytes(options.output));
}

TEST_CASE("paradigm: calibration mode spans one minute")
{
    const auto cal = synth_calibration(SynthConfig::defaults(0.5, 5));
    auto source_rec = cal;
    source_rec.markers.clear();
    runtime::ReplaySource source(source_rec, 0.0);
    const auto rec = run_calibration({}, source, {});
    REQUIRE(rec.markers.size() == 2);
    CHECK(rec.markers[0].label == "calibration_start");
    CHECK(rec.markers[1].label == "calibration_end");
    CHECK(std::abs(rec.markers[1].timestamp - rec.markers[0].timestamp - 60.0) <= 0.5);
    CHECK(rec.duration_s() >= rec.markers[1].timestamp);
}

TEST_CASE("paradigm: source starvation keeps the partial recording")
{
    const auto cfg = SynthConfig::defaults(0.5, 6);
    const auto schedule = generate_cue_sequence({"left", "right"}, 2, 6);
    const auto source_rec = synth_generate(cfg, schedule, schedule.duration_s());
    ShortSource source(source_rec, 40);
    ParadigmOptions options;
    options.output = scratch("partial.rec");
    std::filesystem::remove(options.output);
    try {
        run_paradigm(schedule, source, options);
        FAIL("expected a timeout");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kTimeout);
    }
    const auto partial = signal::load_recording(options.output);
    CHECK(partial.frames() == 40 * 25);
    CHECK(partial.samples == source_rec.samples.leftCols(1000));

    StallingSource stalling(source_rec);
    options.timeout = std::chrono::milliseconds(100);
    try {
        run_paradigm(schedule, stalling, options);
        FAIL("expected a timeout");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kTimeout);
    }
}

TEST_CASE("quick-time harness: five matching frames succeed on the fifth")
{
    const auto transfer = runtime::TransferConfig::defaults({"left", "rest", "right"});
    std::vector<std::string> events;
    QteHarness h({}, [&](const std::string& e, double) { events.push_back(e); });
    h.on_marker({10.0, "task:left"});
    for (int i = 0; i < 4; ++i)
        h.on_frame(frame("left", 0, 0.9, 10.1 + 0.1 * i), transfer);
    CHECK_FALSE(h.trials()[0].resolved);
    h.on_frame(frame("left", 0, 0.9, 10.5), transfer);
    const auto t = h.trials()[0];
    CHECK(t.resolved);
    CHECK(t.success);
    CHECK(t.outcome_s == 10.5);
    CHECK(events == std::vector<std::string> {"qte_start:left", "jump"});
}

TEST_CASE("quick-time harness: mismatches and sub-threshold frames fail once")
{
    const auto transfer = runtime::TransferConfig::defaults({"left", "rest", "right"});
    std::vector<std::string> events;
    QteHarness h({}, [&](const std::string& e, double) { events.push_back(e); });
    h.on_marker({5.0, "task:right"});
    h.on_marker({20.0, "task:rest"});
    for (int i = 0; i <= 40; ++i) {
        const double ts = 5.0 + 0.1 * i;
        h.on_frame(i % 2 ? frame("left", 0, 0.9, ts) : frame("right", 2, 0.45, ts), transfer);
    }
    h.finish(30.0);
    const auto trials = h.trials();
    REQUIRE(trials.size() == 2);
    CHECK_FALSE(trials[0].success);
    CHECK(trials[0].outcome_s == doctest::Approx(8.0));
    CHECK_FALSE(trials[1].success);
    CHECK(events == std::vector<std::string> {"qte_start:right", "qte_start:rest", "fail", "fail"});
    const auto j = h.to_json();
    CHECK(j.at("attempts") == 2);
    CHECK(j.at("successes") == 0);
    CHECK(j.at("classes").at("right").at("attempts") == 1);
}

TEST_CASE("offline training: missing calibration names the ASR requirement")
{
    const auto mapping = scratch("mapping.json");
    signal::save_mapping({{"left", "left"}, {"right", "right"}}, mapping);
    TrainOptions o;
    o.recordings = {scratch("unused.rec")};
    o.mapping = mapping;
    try {
        cli_train(o);
        FAIL("expected a calibration error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kCalibration);
        CHECK(std::string(e.what()).find("artifact subspace reconstruction") != std::string::npos);
    }
    o.calibration = scratch("missing_calibration.rec");
    CHECK_THROWS_AS(cli_train(o), Error);
}

TEST_CASE("offline training: stage errors carry the stage and the file")
{
    const auto mapping = scratch("mapping2.json");
    signal::save_mapping({{"left", "left"}, {"right", "right"}}, mapping);
    const auto cal = scratch("cal.rec");
    signal::save_recording(synth_calibration(SynthConfig::defaults(0.5, 1)), cal);
    const auto broken = scratch("broken.rec");
    std::ofstream(broken) << "not a recording";
    TrainOptions o;
    o.recordings = {broken};
    o.mapping = mapping;
    o.calibration = cal;
    try {
        cli_train(o);
        FAIL("expected a parse error");
    } catch (const Error& e) {
        const std::string what = e.what();
        CHECK(what.find("stage 'load'") != std::string::npos);
        CHECK(what.find("broken.rec") != std::string::npos);
    }
}

TEST_CASE("offline training: linear baseline end to end, deterministic bundle")
{
    const auto session = SynthSession::from_json({{"n_per_class", 12}, {"seed", 31}, {"classes", {"left", "right"}}});
    const auto rec_path = scratch("train.rec");
    signal::save_recording(session.generate(), rec_path);
    const auto cal = scratch("cal_train.rec");
    signal::save_recording(synth_calibration(SynthConfig::defaults(0.5, 32)), cal);
    const auto mapping = scratch("mapping3.json");
    signal::save_mapping({{"left", "left"}, {"right", "right"}}, mapping);

    TrainOptions o;
    o.recordings = {rec_path};
    o.calibration = cal;
    o.mapping = mapping;
    o.classifier = "linear";
    o.seed = 5;
    o.output = scratch("a.bundle");
    o.report = scratch("a.json");
    const auto first = cli_train(o);
    CHECK(first.evaluation.accuracy >= 0.9);
    CHECK(first.test_windows > 0);
    o.output = scratch("b.bundle");
    o.report = scratch("b.json");
    cli_train(o);
    CHECK(read_bytes(scratch("a.bundle")) == read_bytes(scratch("b.bundle")));
    CHECK(read_bytes(scratch("a.json")) == read_bytes(scratch("b.json")));

    const auto bundle = classify::load_model(scratch("a.bundle"));
    CHECK(bundle.classifier_name() == "linear");
    CHECK(bundle.csp.has_value());
    CHECK(bundle.asr.has_value());
    CHECK(bundle.class_names == std::vector<std::string> {"left", "right"});
}

TEST_CASE("offline training: options JSON overlays defaults")
{
    const auto o = TrainOptions::from_json(
        {{"seed", 9}, {"classifier", "knn"}, {"train", {{"max_epochs", 7}}}, {"features", {{"use_csp", false}}}});
    CHECK(o.seed == 9);
    CHECK(o.classifier == "knn");
    CHECK(o.train.max_epochs == 7);
    CHECK(o.train.patience == TrainOptions {}.train.patience);
    CHECK_FALSE(o.features.use_csp);
    CHECK(TrainOptions::from_json(o.to_json()).to_json() == o.to_json());
}
