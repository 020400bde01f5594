#include "runtime/ws_server.hpp"

#include "common/error.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <deque>
#include <set>

namespace mibci::runtime {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

constexpr std::size_t kMaxPending = 256;

class Session;

} // namespace

struct WsServer::Impl {
    asio::io_context ioc;
    std::optional<tcp::acceptor> acceptor;
    std::set<std::shared_ptr<Session>> sessions;
    WsServer* owner = nullptr;

    void accept();
    void joined() { ++owner->clients_; }
    void left() { --owner->clients_; }
};

namespace {

class Session : public std::enable_shared_from_this<Session> {
public:
    Session(tcp::socket socket, WsServer::Impl& server) : ws_(std::move(socket)), server_(server) {}

    void run(std::string greeting)
    {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept([self = shared_from_this(), greeting = std::move(greeting)](beast::error_code ec) {
            if (ec)
                return;
            self->server_.sessions.insert(self);
            self->server_.joined();
            self->send(std::make_shared<const std::string>(greeting));
            self->read();
        });
    }

    void send(std::shared_ptr<const std::string> text)
    {
        if (closed_)
            return;
        if (pending_.size() >= kMaxPending && pending_.size() > 1)
            pending_.erase(pending_.begin() + 1); // the front may be in flight
        pending_.push_back(std::move(text));
        if (pending_.size() == 1)
            write_next();
    }

    void close()
    {
        if (closed_)
            return;
        closed_ = true;
        beast::error_code ec;
        beast::get_lowest_layer(ws_).socket().shutdown(tcp::socket::shutdown_both, ec);
        beast::get_lowest_layer(ws_).socket().close(ec);
    }

private:
    void write_next()
    {
        ws_.text(true);
        ws_.async_write(asio::buffer(*pending_.front()),
            [self = shared_from_this()](beast::error_code ec, std::size_t) {
                if (ec)
                    return self->drop();
                self->pending_.pop_front();
                if (!self->pending_.empty())
                    self->write_next();
            });
    }

    void read()
    {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec)
                return self->drop();
            const std::string text = beast::buffers_to_string(self->buffer_.data());
            self->buffer_.consume(self->buffer_.size());
            for (const auto& reply : self->server_.owner->handle_message(text)) {
                auto shared = std::make_shared<const std::string>(reply.dump());
                for (const auto& s : self->server_.sessions)
                    s->send(shared);
            }
            self->read();
        });
    }

    void drop()
    {
        if (server_.sessions.erase(shared_from_this()) > 0)
            server_.left();
        closed_ = true;
    }

    websocket::stream<beast::tcp_stream> ws_;
    WsServer::Impl& server_;
    beast::flat_buffer buffer_;
    std::deque<std::shared_ptr<const std::string>> pending_;
    bool closed_ = false;
};

} // namespace

void WsServer::Impl::accept()
{
    acceptor->async_accept([this](beast::error_code ec, tcp::socket socket) {
        if (ec)
            return;
        nlohmann::json greeting = nlohmann::json::object();
        if (owner->handlers_.get_config)
            greeting = owner->handlers_.get_config().to_message();
        std::make_shared<Session>(std::move(socket), *this)->run(greeting.dump());
        accept();
    });
}

std::optional<bool> game_event_outcome(const std::string& event)
{
    const auto has = [&](const char* word) { return event.find(word) != std::string::npos; };
    if (has("success") || has("jump"))
        return true;
    if (has("fail") || has("timeout"))
        return false;
    return std::nullopt;
}

WsServer::WsServer(WsHandlers handlers, std::string address, unsigned short port)
    : handlers_(std::move(handlers))
    , address_(std::move(address))
    , requested_port_(port)
{
}

WsServer::~WsServer()
{
    stop();
}

void WsServer::start()
{
    require(!impl_, ErrorCode::kStartup, "server already started");
    impl_ = std::make_shared<Impl>();
    impl_->owner = this;
    try {
        const tcp::endpoint endpoint(asio::ip::make_address(address_), requested_port_);
        impl_->acceptor.emplace(impl_->ioc);
        impl_->acceptor->open(endpoint.protocol());
        impl_->acceptor->set_option(asio::socket_base::reuse_address(true));
        impl_->acceptor->bind(endpoint);
        impl_->acceptor->listen();
        bound_port_ = impl_->acceptor->local_endpoint().port();
    } catch (const std::exception& e) {
        impl_.reset();
        fail(ErrorCode::kStartup, "cannot bind " + address_ + ":" + std::to_string(requested_port_) + ": " + e.what());
    }
    impl_->accept();
    io_thread_ = std::thread([impl = impl_] { impl->ioc.run(); });
}

void WsServer::stop()
{
    if (!impl_)
        return;
    asio::post(impl_->ioc, [impl = impl_] {
        beast::error_code ec;
        impl->acceptor->close(ec);
        for (const auto& s : impl->sessions)
            s->close();
        impl->sessions.clear();
        impl->ioc.stop();
    });
    if (io_thread_.joinable())
        io_thread_.join();
    clients_ = 0;
    impl_.reset();
}

void WsServer::broadcast(const nlohmann::json& message)
{
    if (!impl_)
        return;
    auto text = std::make_shared<const std::string>(message.dump());
    asio::post(impl_->ioc, [impl = impl_, text] {
        for (const auto& s : impl->sessions)
            s->send(text);
    });
}

void WsServer::broadcast_cue(const std::string& cls, int duration_ms)
{
    broadcast({{"type", "cue"}, {"class", cls}, {"duration_ms", duration_ms}});
}

std::vector<nlohmann::json> WsServer::handle_message(const std::string& text)
{
    std::vector<nlohmann::json> replies;
    nlohmann::json msg;
    try {
        msg = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception&) {
        return replies;
    }
    if (!msg.is_object())
        return replies;
    const std::string type = msg.value("type", "");
    try {
        if ((type == "set_threshold" || type == "set_mapping") && handlers_.get_config && handlers_.set_config) {
            TransferConfig cfg = handlers_.get_config();
            const std::size_t i = cfg.index_of(msg.at("class").get<std::string>());
            if (type == "set_threshold")
                cfg.thresholds[i] = msg.at("value").get<double>();
            else
                cfg.mapping[i] = parse_action(msg.at("action").get<std::string>());
            cfg.validate();
            handlers_.set_config(cfg);
            replies.push_back(cfg.to_message());
        } else if (type == "game_event") {
            const std::string event = msg.at("event").get<std::string>();
            const double ts = msg.value("ts", 0.0);
            if (handlers_.add_marker)
                handlers_.add_marker({ts, "game:" + event});
            if (const auto outcome = game_event_outcome(event))
                replies.push_back({{"type", "game_result"}, {"event", event}, {"success", *outcome}});
        }
    } catch (const std::exception&) {
        // Invalid requests leave the runtime untouched.
    }
    return replies;
}

} // namespace mibci::runtime
