#pragma once

#include "runtime/pipeline.hpp"
#include "runtime/ws_server.hpp"
#include "sessions/cue_schedule.hpp"
#include "sessions/qte_harness.hpp"
#include "sessions/synth.hpp"

#include <nlohmann/json.hpp>
#include <memory>
#include <optional>

namespace mibci::sessions {

// A synthetic session description: generator settings plus the cue schedule
// it follows. JSON keys: "synth" (SynthConfig), "classes", "n_per_class",
// "seed", "lead_in_s".
struct SynthSession {
    SynthConfig config = SynthConfig::defaults();
    std::vector<std::string> classes {"left", "rest", "right"};
    int n_per_class = 40;
    std::uint64_t seed = 0;
    double lead_in_s = 12.0;

    static SynthSession from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    CueSchedule schedule() const;
    signal::Recording generate() const;
};

/// Pipeline settings from a pipeline config object: "transfer", "classifier", "queue_capacity".
runtime::PipelineConfig pipeline_config_from_json(
    const nlohmann::json& j, const std::vector<std::string>& classes, std::uint64_t seed);

struct LiveOptions {
    runtime::PipelineConfig pipeline;
    /// WebSocket endpoint; no server when unset.
    std::optional<std::string> ws_address;
    unsigned short ws_port = 0;
    /// Scores quick-time events opened by task markers.
    bool qte = false;
    QteConfig qte_config;
};

// Pipeline plus its optional WebSocket endpoint and quick-time scorer. Class
// cue markers are forwarded to clients as cue messages; QTE outcomes are
// logged as "game:<event>" markers and broadcast as game results.
class LiveSession {
public:
    LiveSession(std::shared_ptr<const classify::ModelBundle> bundle,
        std::unique_ptr<runtime::StreamSource> source, LiveOptions options);
    ~LiveSession();

    void start();
    void wait();
    void stop();

    runtime::Pipeline& pipeline() noexcept { return *pipeline_; }
    const QteHarness* qte() const noexcept { return qte_.get(); }
    std::optional<unsigned short> ws_port() const;

    /// Pipeline stats, QTE results and the bound WebSocket port.
    nlohmann::json summary() const;

private:
    std::shared_ptr<const classify::ModelBundle> bundle_;
    LiveOptions options_;
    std::unique_ptr<runtime::Pipeline> pipeline_;
    std::unique_ptr<runtime::WsServer> server_;
    std::unique_ptr<QteHarness> qte_;
    bool finished_ = false;
};

} // namespace mibci::sessions
