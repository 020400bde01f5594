#include "mibci/mibci.h"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

namespace {

using nlohmann::json;

std::atomic<bool> g_interrupted {false};

struct Failure {
    mibci_status status;
};

void check(mibci_status status)
{
    if (status != MIBCI_OK) {
        std::cerr << "error: " << mibci_last_error() << '\n';
        throw Failure {status};
    }
}

std::string take(char* text)
{
    std::string out = text ? text : "";
    mibci_string_free(text);
    return out;
}

json load_config(const std::string& path)
{
    if (path.empty())
        return json::object();
    std::ifstream in(path);
    if (!in) {
        std::cerr << "error: cannot open config '" << path << "'\n";
        throw Failure {MIBCI_ERR_IO};
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        std::cerr << "error: config '" << path << "' is not valid JSON: " << e.what() << '\n';
        throw Failure {MIBCI_ERR_PARSE};
    }
}

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path);
    out << text << '\n';
    if (!out) {
        std::cerr << "error: cannot write '" << path << "'\n";
        throw Failure {MIBCI_ERR_IO};
    }
}

struct SessionOptions {
    std::string model;
    std::string source;
    double factor = 1.0;
    std::string ws;
    std::string ledger;
    std::string markers;
    std::string summary;
};

void run_session(const SessionOptions& o, const json& pipeline_config, std::uint64_t seed, bool qte)
{
    json req = {{"model", o.model}, {"source", o.source}, {"factor", o.factor}, {"config", pipeline_config},
        {"seed", seed}, {"qte", qte}};
    if (!o.ws.empty())
        req["ws"] = o.ws;
    mibci_session* session = nullptr;
    check(mibci_session_create(req.dump().c_str(), &session));
    std::unique_ptr<mibci_session, void (*)(mibci_session*)> guard(session, mibci_session_destroy);
    check(mibci_session_start(session));
    int port = 0;
    check(mibci_session_ws_port(session, &port));
    if (port > 0)
        std::cerr << "WebSocket endpoint listening on port " << port << '\n';

    std::atomic<bool> done {false};
    std::thread watcher([&] {
        while (!done) {
            if (g_interrupted) {
                mibci_session_stop(session);
                return;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
    });
    const mibci_status waited = mibci_session_wait(session);
    done = true;
    watcher.join();
    check(waited);

    char* summary = nullptr;
    check(mibci_session_summary(session, &summary));
    const json s = json::parse(take(summary));
    std::cout << s.dump(2) << '\n';
    if (!o.summary.empty())
        write_text(o.summary, s.dump(2));
    if (!o.ledger.empty())
        check(mibci_session_write_ledger(session, o.ledger.c_str()));
    if (!o.markers.empty()) {
        char* markers = nullptr;
        check(mibci_session_markers(session, &markers));
        write_text(o.markers, take(markers));
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app {"Motor-imagery BCI toolkit: record, train and run the decoding pipeline"};
    app.require_subcommand(1);
    std::string config_path;
    std::uint64_t seed = 0;
    app.add_option("--config", config_path, "JSON config file for the subcommand");
    app.add_option("--seed", seed, "Seed for every random draw");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic session, calibration and mapping");
    std::string sim_out, sim_cal, sim_map;
    int sim_trials = 0;
    double sim_erd = -1.0;
    simulate->add_option("--out", sim_out, "Training recording to write")->required();
    simulate->add_option("--calibration-out", sim_cal, "Calibration recording to write");
    simulate->add_option("--mapping-out", sim_map, "Class mapping to write");
    simulate->add_option("--n-per-class", sim_trials, "Trials per class");
    simulate->add_option("--erd", sim_erd, "ERD fraction of every class signature");

    // record
    auto* record = app.add_subcommand("record", "Run the cue paradigm on a source and record it");
    std::string rec_source, rec_out, rec_ws;
    double rec_factor = 1.0;
    int rec_trials = 10, rec_timeout = 2000;
    std::vector<std::string> rec_classes {"left", "rest", "right"};
    record->add_option("--source", rec_source, "replay:<file> or synth:<session.json>")->required();
    record->add_option("--out", rec_out, "Recording to write")->required();
    record->add_option("--factor", rec_factor, "Realtime factor, 0 = as fast as possible");
    record->add_option("--n-per-class", rec_trials, "Trials per class for replay sources");
    record->add_option("--classes", rec_classes, "Cue classes for replay sources");
    record->add_option("--timeout-ms", rec_timeout, "Starvation timeout");
    record->add_option("--ws", rec_ws, "Forward cues to a WebSocket endpoint addr:port");

    // calibrate
    auto* calibrate = app.add_subcommand("calibrate", "Record the resting calibration segment");
    std::string cal_source, cal_out;
    double cal_factor = 1.0, cal_duration = 60.0;
    int cal_timeout = 2000;
    calibrate->add_option("--source", cal_source, "replay:<file> or synth:<session.json>")->required();
    calibrate->add_option("--out", cal_out, "Recording to write")->required();
    calibrate->add_option("--factor", cal_factor, "Realtime factor, 0 = as fast as possible");
    calibrate->add_option("--duration", cal_duration, "Calibration length in seconds");
    calibrate->add_option("--timeout-ms", cal_timeout, "Starvation timeout");

    // train
    auto* train = app.add_subcommand("train", "Train a model bundle from recordings");
    std::vector<std::string> tr_recordings;
    std::string tr_cal, tr_map, tr_out, tr_report, tr_classifier;
    int tr_epochs = 0;
    train->add_option("--recording", tr_recordings, "Labelled recording (repeatable)");
    train->add_option("--calibration", tr_cal, "Calibration recording for ASR");
    train->add_option("--mapping", tr_map, "Marker-to-class mapping");
    train->add_option("--out", tr_out, "Model bundle to write");
    train->add_option("--report", tr_report, "Training report to write");
    train->add_option("--classifier", tr_classifier, "s4d, knn or linear");
    train->add_option("--epochs", tr_epochs, "Maximum training epochs");

    // run and replay
    SessionOptions run_opts;
    auto* run = app.add_subcommand("run", "Run the online pipeline and serve control frames");
    run->add_option("--model", run_opts.model, "Model bundle")->required();
    run->add_option("--source", run_opts.source, "replay:<file> or synth:<session.json>")->required();
    run->add_option("--factor", run_opts.factor, "Realtime factor, 0 = as fast as possible");
    run->add_option("--ws", run_opts.ws, "WebSocket endpoint addr:port");
    run->add_option("--ledger", run_opts.ledger, "Latency ledger to write (JSON lines)");
    run->add_option("--markers", run_opts.markers, "Session markers to write");
    run->add_option("--summary", run_opts.summary, "Session summary to write");

    SessionOptions rep_opts;
    auto* replay = app.add_subcommand("replay", "Replay a recording through the pipeline with scripted quick-time events");
    replay->add_option("--model", rep_opts.model, "Model bundle")->required();
    replay->add_option("--source", rep_opts.source, "replay:<file> or synth:<session.json>")->required();
    replay->add_option("--factor", rep_opts.factor, "Realtime factor, 0 = as fast as possible");
    replay->add_option("--ws", rep_opts.ws, "WebSocket endpoint addr:port");
    replay->add_option("--ledger", rep_opts.ledger, "Latency ledger to write (JSON lines)");
    replay->add_option("--markers", rep_opts.markers, "Session markers to write");
    replay->add_option("--summary", rep_opts.summary, "Session summary to write");

    // latency-report
    auto* latency = app.add_subcommand("latency-report", "Summarize a latency ledger");
    std::string lat_in, lat_json;
    latency->add_option("--in", lat_in, "Ledger file (JSON lines)")->required();
    latency->add_option("--json", lat_json, "Write the JSON report here");

    // itr
    auto* itr = app.add_subcommand("itr", "Wolpaw information transfer rate");
    int itr_n = 3;
    double itr_p = 0.0, itr_t = 0.0;
    itr->add_option("--n", itr_n, "Number of classes");
    itr->add_option("--p", itr_p, "Accuracy")->required();
    itr->add_option("--t", itr_t, "Seconds per selection")->required();

    CLI11_PARSE(app, argc, argv);
    const bool seeded = app.count("--seed") > 0;

    try {
        const json config = load_config(config_path);
        if (*simulate) {
            json session = config.contains("session") ? config.at("session") : config;
            if (seeded) {
                session["seed"] = seed;
                session["synth"]["seed"] = seed;
            }
            if (sim_trials > 0)
                session["n_per_class"] = sim_trials;
            if (sim_erd >= 0.0)
                session["synth"]["erd_fraction"] = sim_erd;
            json req = {{"session", session}, {"output", sim_out}};
            if (!sim_cal.empty())
                req["calibration_output"] = sim_cal;
            if (!sim_map.empty())
                req["mapping_output"] = sim_map;
            char* result = nullptr;
            check(mibci_simulate(req.dump().c_str(), &result));
            std::cout << take(result) << '\n';
        } else if (*record) {
            json req = {{"source", rec_source}, {"output", rec_out}, {"factor", rec_factor},
                {"n_per_class", rec_trials}, {"classes", rec_classes}, {"timeout_ms", rec_timeout}, {"seed", seed}};
            if (!rec_ws.empty())
                req["ws"] = rec_ws;
            char* result = nullptr;
            check(mibci_record(req.dump().c_str(), &result));
            std::cout << take(result) << '\n';
        } else if (*calibrate) {
            json req = {{"source", cal_source}, {"output", cal_out}, {"factor", cal_factor},
                {"calibration_s", cal_duration}, {"timeout_ms", cal_timeout}};
            char* result = nullptr;
            check(mibci_calibrate(req.dump().c_str(), &result));
            std::cout << take(result) << '\n';
        } else if (*train) {
            json req = config;
            if (!tr_recordings.empty())
                req["recordings"] = tr_recordings;
            if (!tr_cal.empty())
                req["calibration"] = tr_cal;
            if (!tr_map.empty())
                req["mapping"] = tr_map;
            if (!tr_out.empty())
                req["output"] = tr_out;
            if (!tr_report.empty())
                req["report"] = tr_report;
            if (!tr_classifier.empty())
                req["classifier"] = tr_classifier;
            if (tr_epochs > 0)
                req["train"]["max_epochs"] = tr_epochs;
            if (seeded)
                req["seed"] = seed;
            char* report = nullptr;
            char* log = nullptr;
            check(mibci_train(req.dump().c_str(), &report, &log));
            take(report);
            std::cout << take(log);
        } else if (*run || *replay) {
            std::signal(SIGINT, [](int) { g_interrupted = true; });
            std::signal(SIGTERM, [](int) { g_interrupted = true; });
            const json pipeline = config.contains("pipeline") ? config.at("pipeline") : config;
            if (*run)
                run_session(run_opts, pipeline, seed, false);
            else
                run_session(rep_opts, pipeline, seed, true);
        } else if (*latency) {
            char* report = nullptr;
            char* table = nullptr;
            check(mibci_latency_report(lat_in.c_str(), &report, &table));
            if (!lat_json.empty())
                write_text(lat_json, take(report));
            else
                take(report);
            std::cout << take(table);
        } else if (*itr) {
            double bits = 0.0;
            check(mibci_itr(itr_n, itr_p, itr_t, &bits));
            std::cout << json({{"n", itr_n}, {"p", itr_p}, {"t", itr_t}, {"bits_per_minute", bits}}).dump() << '\n';
        }
    } catch (const Failure& f) {
        return static_cast<int>(f.status) == 0 ? 1 : std::min(static_cast<int>(f.status), 125);
    }
    return 0;
}
