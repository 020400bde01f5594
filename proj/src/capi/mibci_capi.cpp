#include "mibci/mibci.h"

#include "classify/bundle.hpp"
#include "common/error.hpp"
#include "runtime/itr.hpp"
#include "runtime/latency.hpp"
#include "runtime/sources.hpp"
#include "runtime/ws_server.hpp"
#include "sessions/live_session.hpp"
#include "sessions/offline_train.hpp"
#include "sessions/paradigm.hpp"
#include "signal/recording.hpp"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

struct mibci_session {
    std::unique_ptr<mibci::sessions::LiveSession> live;
};

namespace {

using mibci::ErrorCode;
using nlohmann::json;

thread_local std::string g_last_error;

mibci_status set_error(mibci_status status, const std::string& message)
{
    g_last_error = message;
    return status;
}

template <typename F>
mibci_status guarded(F&& body)
{
    try {
        body();
        g_last_error.clear();
        return MIBCI_OK;
    } catch (const mibci::Error& e) {
        return set_error(static_cast<mibci_status>(e.code()), e.what());
    } catch (const json::exception& e) {
        return set_error(MIBCI_ERR_CONFIG, std::string("malformed request: ") + e.what());
    } catch (const std::exception& e) {
        return set_error(MIBCI_ERR_INTERNAL, e.what());
    }
}

char* duplicate(const std::string& text)
{
    char* out = static_cast<char*>(std::malloc(text.size() + 1));
    if (!out)
        throw std::bad_alloc();
    std::memcpy(out, text.c_str(), text.size() + 1);
    return out;
}

void put(char** out, const std::string& text)
{
    if (out)
        *out = duplicate(text);
}

json parse_request(const char* text)
{
    mibci::require(text != nullptr, ErrorCode::kParameter, "request is null");
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        mibci::fail(ErrorCode::kConfig, std::string("request is not valid JSON: ") + e.what());
    }
}

json read_json_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    mibci::require(in.good(), ErrorCode::kIo, "cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        mibci::fail(ErrorCode::kParse, "'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

struct SourceRef {
    std::string kind;
    std::filesystem::path path;
};

SourceRef parse_source(const std::string& text)
{
    const auto colon = text.find(':');
    mibci::require(colon != std::string::npos, ErrorCode::kConfig,
        "source must be replay:<file> or synth:<config>, got '" + text + "'");
    SourceRef s {text.substr(0, colon), text.substr(colon + 1)};
    mibci::require(s.kind == "replay" || s.kind == "synth", ErrorCode::kConfig,
        "unknown source kind '" + s.kind + "'");
    mibci::require(!s.path.empty(), ErrorCode::kConfig, "source path is empty");
    return s;
}

mibci::sessions::SynthSession load_synth_session(const std::filesystem::path& path)
{
    return mibci::sessions::SynthSession::from_json(read_json_file(path));
}

std::pair<std::string, unsigned short> parse_endpoint(const std::string& text)
{
    const auto colon = text.rfind(':');
    mibci::require(colon != std::string::npos, ErrorCode::kConfig, "WebSocket endpoint must be addr:port");
    int port = 0;
    try {
        port = std::stoi(text.substr(colon + 1));
    } catch (const std::exception&) {
        mibci::fail(ErrorCode::kConfig, "WebSocket port is not a number: '" + text + "'");
    }
    mibci::require(port >= 0 && port <= 65535, ErrorCode::kConfig, "WebSocket port out of range");
    return {text.substr(0, colon), static_cast<unsigned short>(port)};
}

json markers_json(const std::vector<mibci::signal::Marker>& markers)
{
    json out = json::array();
    for (const auto& m : markers)
        out.push_back({{"ts", m.timestamp}, {"label", m.label}});
    return out;
}

json recording_summary(const mibci::signal::Recording& rec)
{
    return {{"session_id", rec.session_id}, {"channels", rec.montage.channel_names},
        {"sample_rate_hz", rec.montage.sample_rate_hz}, {"frames", rec.frames()},
        {"duration_s", rec.duration_s()}, {"markers", rec.markers.size()}};
}

mibci::sessions::ParadigmOptions paradigm_options(const json& req)
{
    mibci::sessions::ParadigmOptions o;
    o.output = req.value("output", std::string());
    o.timeout = std::chrono::milliseconds(req.value("timeout_ms", 2000));
    o.session_id = req.value("session_id", std::string("session"));
    return o;
}

} // namespace

extern "C" {

const char* mibci_version(void)
{
    return "1.0.0";
}

const char* mibci_last_error(void)
{
    return g_last_error.c_str();
}

const char* mibci_status_name(mibci_status status)
{
    if (status == MIBCI_OK)
        return "ok";
    if (status == MIBCI_ERR_INTERNAL)
        return "internal error";
    static thread_local std::string name;
    name = std::string(mibci::to_string(static_cast<ErrorCode>(status)));
    return name.c_str();
}

void mibci_string_free(char* text)
{
    std::free(text);
}

mibci_status mibci_itr(int n_classes, double accuracy, double seconds_per_selection, double* bits_per_minute)
{
    return guarded([&] {
        mibci::require(bits_per_minute != nullptr, ErrorCode::kParameter, "output pointer is null");
        *bits_per_minute = mibci::runtime::compute_itr({n_classes, accuracy, seconds_per_selection});
    });
}

mibci_status mibci_latency_report(const char* ledger_path, char** report_json, char** report_table)
{
    return guarded([&] {
        mibci::require(ledger_path != nullptr, ErrorCode::kParameter, "ledger path is null");
        std::ifstream in(ledger_path);
        mibci::require(in.good(), ErrorCode::kIo, std::string("cannot open ledger '") + ledger_path + "'");
        const auto report = mibci::runtime::latency_report(mibci::runtime::read_ledger(in));
        put(report_json, report.to_json().dump(2));
        put(report_table, report.table());
    });
}

mibci_status mibci_recording_info(const char* path, char** info_json)
{
    return guarded([&] {
        mibci::require(path != nullptr, ErrorCode::kParameter, "path is null");
        const auto rec = mibci::signal::load_recording(path);
        json j = recording_summary(rec);
        j["marker_list"] = markers_json(rec.markers);
        put(info_json, j.dump(2));
    });
}

mibci_status mibci_simulate(const char* request_json, char** result_json)
{
    return guarded([&] {
        const json req = parse_request(request_json);
        const auto session = mibci::sessions::SynthSession::from_json(req.value("session", json::object()));
        const std::string output = req.at("output").get<std::string>();
        const auto rec = session.generate();
        mibci::signal::save_recording(rec, output);
        json result = {{"recording", output}, {"summary", recording_summary(rec)}};
        if (req.contains("calibration_output")) {
            auto cal_config = session.config;
            cal_config.seed = session.config.seed ^ 0xCA11B7A7E5EEDULL;
            const auto cal = mibci::sessions::synth_calibration(cal_config, req.value("calibration_s", 60.0));
            mibci::signal::save_recording(cal, req.at("calibration_output").get<std::string>());
            result["calibration"] = req.at("calibration_output");
        }
        if (req.contains("mapping_output")) {
            mibci::signal::ClassMapping mapping;
            for (const auto& c : session.classes)
                mapping[c] = c;
            mibci::signal::save_mapping(mapping, req.at("mapping_output").get<std::string>());
            result["mapping"] = req.at("mapping_output");
        }
        put(result_json, result.dump(2));
    });
}

mibci_status mibci_record(const char* request_json, char** result_json)
{
    return guarded([&] {
        const json req = parse_request(request_json);
        const auto source_ref = parse_source(req.at("source").get<std::string>());
        const double factor = req.value("factor", 1.0);
        mibci::sessions::CueSchedule schedule;
        mibci::signal::Recording source_rec;
        if (source_ref.kind == "synth") {
            const auto session = load_synth_session(source_ref.path);
            schedule = session.schedule();
            source_rec = mibci::sessions::synth_generate(session.config, schedule, schedule.duration_s());
        } else {
            source_rec = mibci::signal::load_recording(source_ref.path);
            schedule = mibci::sessions::generate_cue_sequence(
                req.value("classes", std::vector<std::string> {"left", "rest", "right"}),
                req.value("n_per_class", 10), req.value("seed", std::uint64_t {0}));
        }
        source_rec.markers.clear();
        mibci::runtime::ReplaySource source(std::move(source_rec), factor);

        auto options = paradigm_options(req);
        std::unique_ptr<mibci::runtime::WsServer> server;
        if (req.contains("ws")) {
            const auto [address, port] = parse_endpoint(req.at("ws").get<std::string>());
            server = std::make_unique<mibci::runtime::WsServer>(mibci::runtime::WsHandlers {}, address, port);
            server->start();
            options.on_cue = [s = server.get()](const std::string& cls, int ms) { s->broadcast_cue(cls, ms); };
        }
        const auto rec = mibci::sessions::run_paradigm(schedule, source, options);
        if (server)
            server->stop();
        put(result_json, json({{"recording", options.output.string()}, {"summary", recording_summary(rec)}}).dump(2));
    });
}

mibci_status mibci_calibrate(const char* request_json, char** result_json)
{
    return guarded([&] {
        const json req = parse_request(request_json);
        const auto source_ref = parse_source(req.at("source").get<std::string>());
        mibci::sessions::CalibrationPlan plan;
        plan.calibration_s = req.value("calibration_s", plan.calibration_s);
        mibci::signal::Recording source_rec;
        if (source_ref.kind == "synth")
            source_rec = mibci::sessions::synth_calibration(
                load_synth_session(source_ref.path).config, plan.calibration_s, plan.lead_s, plan.tail_s);
        else
            source_rec = mibci::signal::load_recording(source_ref.path);
        source_rec.markers.clear();
        mibci::runtime::ReplaySource source(std::move(source_rec), req.value("factor", 1.0));
        const auto options = paradigm_options(req);
        const auto rec = mibci::sessions::run_calibration(plan, source, options);
        put(result_json, json({{"recording", options.output.string()}, {"summary", recording_summary(rec)}}).dump(2));
    });
}

mibci_status mibci_train(const char* request_json, char** result_json, char** log_text)
{
    return guarded([&] {
        const json req = parse_request(request_json);
        const auto options = mibci::sessions::TrainOptions::from_json(req);
        std::ostringstream log;
        const auto outcome = mibci::sessions::cli_train(options, &log);
        put(result_json, outcome.report.dump(2));
        put(log_text, log.str());
    });
}

mibci_status mibci_session_create(const char* request_json, mibci_session** session)
{
    return guarded([&] {
        mibci::require(session != nullptr, ErrorCode::kParameter, "session pointer is null");
        *session = nullptr;
        const json req = parse_request(request_json);
        auto bundle = std::make_shared<const mibci::classify::ModelBundle>(
            mibci::classify::load_model(req.at("model").get<std::string>()));
        const auto source_ref = parse_source(req.at("source").get<std::string>());
        const double factor = req.value("factor", 1.0);
        std::unique_ptr<mibci::runtime::StreamSource> source;
        if (source_ref.kind == "synth")
            source = std::make_unique<mibci::runtime::ReplaySource>(load_synth_session(source_ref.path).generate(), factor);
        else
            source = mibci::runtime::open_replay(source_ref.path, factor);

        mibci::sessions::LiveOptions options;
        options.pipeline = mibci::sessions::pipeline_config_from_json(
            req.value("config", json::object()), bundle->class_names, req.value("seed", std::uint64_t {0}));
        if (req.contains("ws") && !req.at("ws").is_null()) {
            const auto [address, port] = parse_endpoint(req.at("ws").get<std::string>());
            options.ws_address = address;
            options.ws_port = port;
        }
        options.qte = req.value("qte", false);
        auto handle = std::make_unique<mibci_session>();
        handle->live = std::make_unique<mibci::sessions::LiveSession>(bundle, std::move(source), options);
        *session = handle.release();
    });
}

mibci_status mibci_session_start(mibci_session* session)
{
    return guarded([&] {
        mibci::require(session != nullptr, ErrorCode::kParameter, "session is null");
        session->live->start();
    });
}

mibci_status mibci_session_wait(mibci_session* session)
{
    return guarded([&] {
        mibci::require(session != nullptr, ErrorCode::kParameter, "session is null");
        session->live->wait();
    });
}

mibci_status mibci_session_stop(mibci_session* session)
{
    return guarded([&] {
        mibci::require(session != nullptr, ErrorCode::kParameter, "session is null");
        session->live->pipeline().stop();
    });
}

mibci_status mibci_session_summary(mibci_session* session, char** summary_json)
{
    return guarded([&] {
        mibci::require(session != nullptr, ErrorCode::kParameter, "session is null");
        put(summary_json, session->live->summary().dump(2));
    });
}

mibci_status mibci_session_ws_port(mibci_session* session, int* port)
{
    return guarded([&] {
        mibci::require(session != nullptr && port != nullptr, ErrorCode::kParameter, "null argument");
        *port = session->live->ws_port().value_or(0);
    });
}

mibci_status mibci_session_write_ledger(mibci_session* session, const char* path)
{
    return guarded([&] {
        mibci::require(session != nullptr && path != nullptr, ErrorCode::kParameter, "null argument");
        std::ofstream out(path);
        mibci::require(out.good(), ErrorCode::kIo, std::string("cannot open '") + path + "' for writing");
        mibci::runtime::write_ledger(out, session->live->pipeline().ledger());
        mibci::require(out.good(), ErrorCode::kIo, std::string("writing '") + path + "' failed");
    });
}

mibci_status mibci_session_markers(mibci_session* session, char** markers_out)
{
    return guarded([&] {
        mibci::require(session != nullptr, ErrorCode::kParameter, "session is null");
        put(markers_out, markers_json(session->live->pipeline().markers()).dump(2));
    });
}

void mibci_session_destroy(mibci_session* session)
{
    delete session;
}

} // extern "C"
