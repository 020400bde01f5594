#include "sessions/live_session.hpp"

#include "common/error.hpp"

#include <algorithm>
#include <cmath>

namespace mibci::sessions {

SynthSession SynthSession::from_json(const nlohmann::json& j)
{
    SynthSession s;
    try {
        if (j.contains("synth"))
            s.config = SynthConfig::from_json(j.at("synth"));
        if (j.contains("classes"))
            s.classes = j.at("classes").get<std::vector<std::string>>();
        s.n_per_class = j.value("n_per_class", s.n_per_class);
        s.seed = j.value("seed", s.seed);
        s.lead_in_s = j.value("lead_in_s", s.lead_in_s);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kConfig, std::string("malformed synthetic session: ") + e.what());
    }
    require(s.n_per_class >= 1, ErrorCode::kConfig, "n_per_class must be at least 1");
    s.config.validate();
    return s;
}

nlohmann::json SynthSession::to_json() const
{
    return {{"synth", config.to_json()}, {"classes", classes}, {"n_per_class", n_per_class}, {"seed", seed},
        {"lead_in_s", lead_in_s}};
}

CueSchedule SynthSession::schedule() const
{
    return generate_cue_sequence(classes, n_per_class, seed, {}, lead_in_s);
}

signal::Recording SynthSession::generate() const
{
    const CueSchedule s = schedule();
    return synth_generate(config, s, s.duration_s());
}

runtime::PipelineConfig pipeline_config_from_json(
    const nlohmann::json& j, const std::vector<std::string>& classes, std::uint64_t seed)
{
    runtime::PipelineConfig c;
    c.transfer = runtime::TransferConfig::defaults(classes);
    c.classifier.seed = seed;
    try {
        if (j.contains("transfer"))
            c.transfer.apply_json(j.at("transfer"));
        if (j.contains("classifier")) {
            const auto& k = j.at("classifier");
            c.classifier.mc_passes = k.value("mc_passes", c.classifier.mc_passes);
            c.classifier.hop_s = k.value("hop_s", c.classifier.hop_s);
        }
        c.queue_capacity = j.value("queue_capacity", c.queue_capacity);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kConfig, std::string("malformed pipeline config: ") + e.what());
    }
    require(c.queue_capacity >= 1, ErrorCode::kConfig, "queue_capacity must be at least 1");
    return c;
}

LiveSession::LiveSession(std::shared_ptr<const classify::ModelBundle> bundle,
    std::unique_ptr<runtime::StreamSource> source, LiveOptions options)
    : bundle_(std::move(bundle))
    , options_(std::move(options))
{
    pipeline_ = std::make_unique<runtime::Pipeline>(bundle_, std::move(source), options_.pipeline);
    runtime::Pipeline* p = pipeline_.get();

    if (options_.ws_address) {
        runtime::WsHandlers handlers;
        handlers.get_config = [p] { return p->transfer_config(); };
        handlers.set_config = [p](const runtime::TransferConfig& c) { p->set_transfer_config(c); };
        handlers.add_marker = [p](const signal::Marker& m) { p->inject_marker(m); };
        server_ = std::make_unique<runtime::WsServer>(std::move(handlers), *options_.ws_address, options_.ws_port);
    }
    runtime::WsServer* ws = server_.get();

    if (options_.qte) {
        options_.qte_config.delta_up = options_.pipeline.transfer.delta_up;
        options_.qte_config.delta_down = options_.pipeline.transfer.delta_down;
        qte_ = std::make_unique<QteHarness>(options_.qte_config, [p, ws](const std::string& event, double ts) {
            p->inject_marker({ts, "game:" + event});
            if (ws) {
                if (const auto outcome = runtime::game_event_outcome(event))
                    ws->broadcast({{"type", "game_result"}, {"event", event}, {"success", *outcome}});
            }
        });
    }
    QteHarness* qte = qte_.get();

    const auto classes = bundle_->class_names;
    const int cue_ms = static_cast<int>(std::lround(1000.0 * PhaseDurations {}.cue_s));
    p->on_marker([qte, ws, classes, cue_ms](const signal::Marker& m) {
        if (qte)
            qte->on_marker(m);
        if (ws && std::find(classes.begin(), classes.end(), m.label) != classes.end())
            ws->broadcast_cue(m.label, cue_ms);
    });
    p->on_frame([p, qte, ws](const runtime::ControlFrame& f) {
        if (ws)
            ws->broadcast_frame(f);
        if (qte)
            qte->on_frame(f, p->transfer_config());
    });
}

LiveSession::~LiveSession()
{
    stop();
}

void LiveSession::start()
{
    if (server_)
        server_->start();
    pipeline_->start();
}

void LiveSession::wait()
{
    pipeline_->wait();
    if (qte_ && !finished_)
        qte_->finish(pipeline_->stream_time());
    finished_ = true;
    if (server_)
        server_->stop();
}

void LiveSession::stop()
{
    pipeline_->stop();
    if (qte_ && !finished_)
        qte_->finish(pipeline_->stream_time());
    finished_ = true;
    if (server_)
        server_->stop();
}

std::optional<unsigned short> LiveSession::ws_port() const
{
    if (!server_)
        return std::nullopt;
    return server_->port();
}

nlohmann::json LiveSession::summary() const
{
    nlohmann::json j = {{"stats", pipeline_->stats().to_json()}};
    if (qte_)
        j["qte"] = qte_->to_json();
    if (server_)
        j["ws_port"] = server_->port();
    return j;
}

} // namespace mibci::sessions
