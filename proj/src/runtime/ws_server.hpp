#pragma once

#include "runtime/transfer.hpp"
#include "signal/types.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <functional>
#include <memory>
#include <string>
#include <thread>

namespace mibci::runtime {

// Hooks the server uses to read and update runtime state. Missing hooks make
// the corresponding client messages no-ops.
struct WsHandlers {
    std::function<TransferConfig()> get_config;
    std::function<void(const TransferConfig&)> set_config;
    std::function<void(const signal::Marker&)> add_marker;
};

/// Outcome carried by a game event name, if it is an outcome event.
std::optional<bool> game_event_outcome(const std::string& event);

// Loopback WebSocket endpoint speaking the line-delimited JSON protocol. Every
// text message carries one JSON object. New clients first receive the current
// config snapshot. Broadcasts never block the caller; a slow client drops its
// oldest pending messages.
class WsServer {
public:
    WsServer(WsHandlers handlers, std::string address = "127.0.0.1", unsigned short port = 0);
    ~WsServer();

    WsServer(const WsServer&) = delete;
    WsServer& operator=(const WsServer&) = delete;

    /// Binds and starts the I/O thread; throws kStartup when the endpoint is not bindable.
    void start();
    void stop();

    unsigned short port() const noexcept { return bound_port_; }
    std::size_t clients() const noexcept { return clients_; }

    void broadcast(const nlohmann::json& message);
    void broadcast_frame(const ControlFrame& frame) { broadcast(frame.to_message()); }
    void broadcast_cue(const std::string& cls, int duration_ms);

    /// Handles one client message and returns the replies to broadcast.
    std::vector<nlohmann::json> handle_message(const std::string& text);

    struct Impl;

private:
    WsHandlers handlers_;
    std::string address_;
    unsigned short requested_port_;
    unsigned short bound_port_ = 0;
    std::atomic<std::size_t> clients_ {0};
    std::shared_ptr<Impl> impl_;
    std::thread io_thread_;
};

} // namespace mibci::runtime
