#include "classify/bundle.hpp"
#include "common/error.hpp"
#include "runtime/bounded_queue.hpp"
#include "runtime/itr.hpp"
#include "runtime/latency.hpp"
#include "runtime/pipeline.hpp"
#include "runtime/sources.hpp"
#include "runtime/transfer.hpp"
#include "runtime/ws_server.hpp"

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <doctest.h>

#include <chrono>
#include <random>
#include <sstream>
#include <thread>

using namespace mibci;
using namespace mibci::runtime;

namespace {

Eigen::VectorXd one_hot(Eigen::Index n, Eigen::Index k)
{
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    v(k) = 1.0;
    return v;
}

TransferConfig three_class()
{
    TransferConfig c = TransferConfig::defaults({"left", "rest", "right"});
    c.mapping = {Action::kXNeg, Action::kBinA, Action::kYPos};
    return c;
}

signal::Recording noise_recording(double seconds, std::uint64_t seed)
{
    signal::Recording rec;
    rec.montage.channel_names = {"C3", "Cz", "C4"};
    rec.montage.sample_rate_hz = 250.0;
    const auto frames = static_cast<Eigen::Index>(seconds * 250.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 10.0);
    rec.samples.resize(3, frames);
    for (Eigen::Index i = 0; i < rec.samples.size(); ++i)
        rec.samples.data()[i] = static_cast<float>(n(rng));
    for (int s = 1; s < static_cast<int>(seconds); ++s)
        rec.markers.push_back({static_cast<double>(s) + 0.05, "tick" + std::to_string(s)});
    return rec;
}

// kNN bundle over Morlet features of the three noise channels; no ASR, no CSP.
std::shared_ptr<const classify::ModelBundle> tiny_bundle()
{
    auto b = std::make_shared<classify::ModelBundle>();
    b->channel_names = {"C3", "Cz", "C4"};
    b->class_names = {"left", "rest", "right"};
    b->features.use_csp = false;
    b->normalization.mean = {0, 0, 0};
    b->normalization.stddev = {10, 10, 10};
    const Eigen::Index dims = 3 * static_cast<Eigen::Index>(b->features.morlet.freqs_hz.size());
    classify::BaselineModel m;
    m.kind = classify::BaselineKind::kKnn;
    m.n_classes = 3;
    m.options.k = 1;
    m.train_x = Eigen::MatrixXd::Zero(3, dims);
    m.train_x.row(1).setConstant(1.0);
    m.train_x.row(2).setConstant(2.0);
    m.train_y = {0, 1, 2};
    b->baseline = m;
    return b;
}

namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;

struct Client {
    boost::asio::io_context ioc;
    websocket::stream<tcp::socket> ws {ioc};

    explicit Client(unsigned short port)
    {
        tcp::resolver resolver(ioc);
        boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
        ws.handshake("127.0.0.1", "/");
    }
    nlohmann::json read()
    {
        beast::flat_buffer buffer;
        ws.read(buffer);
        return nlohmann::json::parse(beast::buffers_to_string(buffer.data()));
    }
    void write(const nlohmann::json& j) { ws.write(boost::asio::buffer(j.dump())); }
};

} // namespace

TEST_CASE("transfer: saturated one-hot class drives its axis to full scale")
{
    TransferConfig c = three_class();
    TransferState s;
    ControlFrame f;
    for (int i = 0; i < 5; ++i)
        f = transfer_step(s, c, one_hot(3, 0), i);
    CHECK(f.x == doctest::Approx(-1.0));
    for (int i = 0; i < 12; ++i)
        f = transfer_step(s, c, one_hot(3, 2), i);
    CHECK(f.y == doctest::Approx(1.0));
    CHECK(f.x == doctest::Approx(0.0));
    CHECK(f.label == "right");
}

TEST_CASE("transfer: uniform probabilities stay below threshold and decay")
{
    TransferConfig c = three_class();
    TransferState s;
    s.x = 0.5;
    s.a_fill = 0.5;
    const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
    const ControlFrame f = transfer_step(s, c, uniform, 0.0);
    CHECK(f.x == doctest::Approx(0.4));
    CHECK(f.a_fill == doctest::Approx(0.4));
    CHECK_FALSE(f.a);
}

TEST_CASE("transfer: bin action pulses on the fifth sustained tick")
{
    TransferConfig c = three_class();
    TransferState s;
    for (int tick = 1; tick <= 5; ++tick) {
        const ControlFrame f = transfer_step(s, c, one_hot(3, 1), tick);
        CHECK(f.a == (tick == 5));
        if (tick < 5)
            CHECK(f.a_fill == doctest::Approx(0.2 * tick));
        else
            CHECK(f.a_fill == 0.0);
    }
}

TEST_CASE("transfer: bounds and single-tick pulses")
{
    TransferConfig c = three_class();
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> cls(0, 2);
    std::uniform_int_distribution<int> run(1, 25);
    TransferState s;
    bool prev_a = false;
    double ts = 0;
    for (int block = 0; block < 400; ++block) {
        const int k = cls(rng);
        const int len = run(rng);
        for (int i = 0; i < len; ++i) {
            const ControlFrame f = transfer_step(s, c, one_hot(3, k), ts += 0.1);
            CHECK(std::abs(f.x) <= 1.0);
            CHECK(std::abs(f.y) <= 1.0);
            CHECK(f.a_fill >= 0.0);
            CHECK(f.a_fill <= 1.0);
            CHECK_FALSE((f.a && prev_a));
            prev_a = f.a;
        }
    }
}

TEST_CASE("transfer: label changes at most once per run of identical one-hot outputs")
{
    TransferConfig c = three_class();
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> run(1, 25);
    TransferState s;
    std::string prev;
    double ts = 0;
    for (int block = 0; block < 400; ++block) {
        const int k = block % 2 == 0 ? 0 : 2;
        const int len = run(rng);
        int changes = 0;
        for (int i = 0; i < len; ++i) {
            const ControlFrame f = transfer_step(s, c, one_hot(3, k), ts += 0.1);
            if (!prev.empty() && f.label != prev) {
                ++changes;
                CHECK(f.label == c.classes[static_cast<std::size_t>(k)]);
            }
            prev = f.label;
        }
        CHECK(changes <= 1);
    }
}

TEST_CASE("transfer: config validation happens at startup")
{
    TransferConfig c = three_class();
    c.thresholds[0] = 0.2;
    CHECK_THROWS_AS(c.validate(), Error);
    TransferConfig d = three_class();
    d.mapping.pop_back();
    CHECK_THROWS_AS(d.validate(), Error);
    CHECK_THROWS_AS(parse_action("jump"), Error);
    TransferConfig e = three_class();
    e.apply_json({{"thresholds", {{"rest", 0.7}}}, {"mapping", {{"left", "bin_b"}}}});
    CHECK(e.thresholds[1] == 0.7);
    CHECK(e.mapping[0] == Action::kBinB);
    CHECK_THROWS_AS(e.apply_json({{"thresholds", {{"up", 0.7}}}}), Error);
}

TEST_CASE("itr: published operating points")
{
    CHECK(compute_itr({3, 0.73, 1.617}) == doctest::Approx(17.57).epsilon(0.05 / 17.57));
    CHECK(compute_itr({3, 0.73, 3.117}) == doctest::Approx(9.11).epsilon(0.05 / 9.11));
    CHECK(compute_itr({3, 0.73, 4.617}) == doctest::Approx(6.15).epsilon(0.05 / 6.15));
    CHECK(compute_itr({2, 1.0, 60.0}) == 1.0);
    CHECK(compute_itr({3, 1.0 / 3.0, 2.0}) == doctest::Approx(0.0));
}

TEST_CASE("itr: invalid parameters")
{
    CHECK_THROWS_AS(compute_itr({3, 0.2, 1.0}), Error);
    CHECK_THROWS_AS(compute_itr({3, 1.1, 1.0}), Error);
    CHECK_THROWS_AS(compute_itr({1, 1.0, 1.0}), Error);
    CHECK_THROWS_AS(compute_itr({3, 0.9, 0.0}), Error);
}

TEST_CASE("itr: increasing in accuracy, decreasing in selection time")
{
    std::mt19937_64 rng(11);
    for (int i = 0; i < 1000; ++i) {
        const int n = 2 + static_cast<int>(rng() % 5);
        std::uniform_real_distribution<double> pd(1.0 / n + 1e-3, 1.0);
        std::uniform_real_distribution<double> td(0.1, 30.0);
        double p1 = pd(rng), p2 = pd(rng);
        if (p1 > p2)
            std::swap(p1, p2);
        double t1 = td(rng), t2 = td(rng);
        if (t1 > t2)
            std::swap(t1, t2);
        CHECK(compute_itr({n, p1, t1}) <= compute_itr({n, p2, t1}) + 1e-12);
        CHECK(compute_itr({n, p2, t2}) <= compute_itr({n, p2, t1}) + 1e-12);
    }
}

TEST_CASE("latency: constant 10 ms stages give flat percentiles")
{
    std::vector<LatencyEntry> ledger;
    for (std::uint64_t i = 0; i < 200; ++i) {
        LatencyEntry e;
        e.seq = i;
        double t = 100.0 + static_cast<double>(i);
        for (std::size_t s = 0; s < kStageCount; ++s) {
            e.start[s] = t;
            t += 0.010;
            e.done[s] = t;
        }
        ledger.push_back(e);
    }
    const LatencyReport r = latency_report(ledger);
    for (std::size_t s = 1; s < kStageCount; ++s) {
        CHECK(r.stage[s].median == doctest::Approx(0.010));
        CHECK(r.stage[s].p95 == doctest::Approx(0.010));
        CHECK(r.stage[s].p99 == doctest::Approx(0.010));
    }
    CHECK(r.total.median == doctest::Approx(0.030));
    CHECK(r.accounting_violations == 0);
    CHECK(r.monotonicity_violations == 0);
    CHECK(r.to_json().at("total").at("median_ms").get<double>() == doctest::Approx(30.0));

    std::stringstream io;
    write_ledger(io, ledger);
    const auto back = read_ledger(io);
    REQUIRE(back.size() == ledger.size());
    CHECK(back[17].done == ledger[17].done);
    CHECK(back[17].start == ledger[17].start);
}

TEST_CASE("latency: short or empty ledgers are report errors")
{
    std::vector<LatencyEntry> ledger;
    CHECK_THROWS_AS(latency_report(ledger), Error);
    ledger.resize(kMinLedgerEntries - 1);
    try {
        latency_report(ledger);
        FAIL("expected a report error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kReport);
    }
    std::stringstream bad("{\"seq\": 1, \"acq");
    CHECK_THROWS_AS(read_ledger(bad), Error);
}

TEST_CASE("bounded queue drops the oldest and keeps order")
{
    BoundedQueue<int> q(4);
    for (int i = 0; i < 10; ++i)
        q.push(i);
    CHECK(q.dropped() == 6);
    q.close();
    std::vector<int> out;
    while (auto v = q.pop())
        out.push_back(*v);
    CHECK(out == std::vector<int> {6, 7, 8, 9});
    q.push(1);
    CHECK_FALSE(q.pop().has_value());
}

TEST_CASE("replay: unpaced delivery preserves order and samples")
{
    const auto rec = noise_recording(4.0, 1);
    ReplaySource src(rec, 0.0, 17);
    Eigen::MatrixXd joined(3, 0);
    std::vector<signal::Marker> markers;
    std::uint64_t expected_seq = 0;
    while (auto c = src.next()) {
        CHECK(c->seq == expected_seq++);
        CHECK(c->chunk.start_timestamp == doctest::Approx(static_cast<double>(joined.cols()) / 250.0));
        joined.conservativeResize(3, joined.cols() + c->chunk.frames());
        joined.rightCols(c->chunk.frames()) = c->chunk.samples;
        markers.insert(markers.end(), c->markers.begin(), c->markers.end());
    }
    CHECK(joined == rec.samples);
    CHECK(markers == rec.markers);
}

TEST_CASE("replay: realtime pacing")
{
    const auto rec = noise_recording(10.0, 2);
    ReplaySource src(rec, 1.0);
    const auto t0 = Clock::now();
    std::size_t chunks = 0;
    while (src.next())
        ++chunks;
    const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    CHECK(chunks == 100);
    CHECK(elapsed == doctest::Approx(10.0).epsilon(0.02));
}

TEST_CASE("replay: bad realtime factor and missing file")
{
    CHECK_THROWS_AS(ReplaySource(noise_recording(1.0, 3), -1.0), Error);
    CHECK_THROWS_AS(open_replay("/nonexistent/file.rec", 1.0), Error);
}

TEST_CASE("pipeline: one frame per hop, markers forwarded, ledger monotonic")
{
    const auto rec = noise_recording(10.0, 5);
    PipelineConfig cfg;
    cfg.transfer = TransferConfig::defaults({"left", "rest", "right"});
    Pipeline p(tiny_bundle(), std::make_unique<ReplaySource>(rec, 5.0), cfg);
    std::vector<double> ts;
    std::vector<std::string> seen;
    p.on_frame([&](const ControlFrame& f) { ts.push_back(f.ts); });
    p.on_marker([&](const signal::Marker& m) { seen.push_back(m.label); });
    p.start();
    p.wait();
    const PipelineStats s = p.stats();
    CHECK(s.finished);
    CHECK(s.dropped() == 0);
    CHECK(s.chunks == 100);
    CHECK(s.frames == 91);
    REQUIRE(ts.size() == 91);
    for (std::size_t i = 1; i < ts.size(); ++i)
        CHECK(ts[i] - ts[i - 1] == doctest::Approx(0.1));
    CHECK(seen.size() == rec.markers.size());
    for (const auto& e : p.ledger()) {
        for (std::size_t st = 0; st < kStageCount; ++st) {
            CHECK(e.start[st] <= e.done[st]);
            if (st > 0)
                CHECK(e.done[st - 1] <= e.start[st]);
        }
    }
}

TEST_CASE("pipeline: rejects mismatched montages and transfer tables")
{
    auto rec = noise_recording(2.0, 6);
    rec.montage.channel_names[2] = "Pz";
    PipelineConfig cfg;
    cfg.transfer = TransferConfig::defaults({"left", "rest", "right"});
    try {
        Pipeline p(tiny_bundle(), std::make_unique<ReplaySource>(rec, 0.0), cfg);
        FAIL("expected a startup error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kStartup);
    }
    PipelineConfig other;
    other.transfer = TransferConfig::defaults({"up", "down", "rest"});
    CHECK_THROWS_AS(Pipeline(tiny_bundle(), std::make_unique<ReplaySource>(noise_recording(2.0, 6), 0.0), other),
        Error);
}

TEST_CASE("pipeline: stop shuts down promptly mid-stream")
{
    PipelineConfig cfg;
    cfg.transfer = TransferConfig::defaults({"left", "rest", "right"});
    Pipeline p(tiny_bundle(), std::make_unique<ReplaySource>(noise_recording(60.0, 7), 1.0), cfg);
    p.start();
    std::this_thread::sleep_for(std::chrono::milliseconds(1500));
    const auto t0 = Clock::now();
    p.stop();
    CHECK(std::chrono::duration<double>(Clock::now() - t0).count() < 2.0);
    CHECK_FALSE(p.running());
    CHECK(p.stats().frames > 0);
}

TEST_CASE("pipeline: threshold swap applies between ticks")
{
    PipelineConfig cfg;
    cfg.transfer = TransferConfig::defaults({"left", "rest", "right"});
    Pipeline p(tiny_bundle(), std::make_unique<ReplaySource>(noise_recording(2.0, 8), 0.0), cfg);
    TransferConfig next = p.transfer_config();
    next.thresholds[1] = 0.9;
    p.set_transfer_config(next);
    CHECK(p.transfer_config().thresholds[1] == 0.9);
    next.thresholds[1] = 0.1;
    CHECK_THROWS_AS(p.set_transfer_config(next), Error);
    CHECK(p.transfer_config().thresholds[1] == 0.9);
}

TEST_CASE("websocket: greeting, threshold update, game events and frames")
{
    TransferConfig config = TransferConfig::defaults({"left", "rest", "right"});
    std::mutex m;
    std::vector<signal::Marker> markers;
    WsHandlers h;
    h.get_config = [&] {
        std::lock_guard lock(m);
        return config;
    };
    h.set_config = [&](const TransferConfig& c) {
        std::lock_guard lock(m);
        config = c;
    };
    h.add_marker = [&](const signal::Marker& mk) {
        std::lock_guard lock(m);
        markers.push_back(mk);
    };
    WsServer server(h);
    server.broadcast({{"type", "cue"}, {"class", "left"}, {"duration_ms", 1000}});
    server.start();
    REQUIRE(server.port() > 0);
    {
        Client c(server.port());
        const auto greeting = c.read();
        CHECK(greeting.at("type") == "config");
        CHECK(greeting.at("thresholds").at("rest") == 0.5);
        CHECK(greeting.at("buffer_len") == 10);

        c.write({{"type", "set_threshold"}, {"class", "rest"}, {"value", 0.8}});
        const auto reply = c.read();
        CHECK(reply.at("type") == "config");
        CHECK(reply.at("thresholds").at("rest") == doctest::Approx(0.8));
        CHECK(h.get_config().thresholds[1] == doctest::Approx(0.8));

        c.write({{"type", "set_mapping"}, {"class", "rest"}, {"action", "bin_a"}});
        CHECK(c.read().at("mapping").at("rest") == "bin_a");

        c.write({{"type", "game_event"}, {"event", "jump"}, {"ts", 12.5}});
        const auto result = c.read();
        CHECK(result.at("type") == "game_result");
        CHECK(result.at("success") == true);

        ControlFrame f;
        f.probs = Eigen::Vector3d(0.2, 0.5, 0.3);
        f.label = "rest";
        f.label_index = 1;
        f.ts = 3.25;
        server.broadcast_frame(f);
        server.broadcast_cue("right", 1000);
        const auto frame = c.read();
        CHECK(frame.at("type") == "control");
        CHECK(frame.at("ts") == 3.25);
        CHECK(frame.at("probs").size() == 3);
        const auto cue = c.read();
        CHECK(cue.at("type") == "cue");
        CHECK(cue.at("class") == "right");
        CHECK(cue.at("duration_ms") == 1000);
        CHECK(server.clients() == 1);
        c.ws.close(websocket::close_code::normal);
    }
    for (int i = 0; i < 100 && server.clients() > 0; ++i)
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    CHECK(server.clients() == 0);
    server.broadcast({{"type", "cue"}, {"class", "left"}, {"duration_ms", 1000}});
    {
        std::lock_guard lock(m);
        REQUIRE(markers.size() == 1);
        CHECK(markers[0].label == "game:jump");
        CHECK(markers[0].timestamp == 12.5);
    }
    server.stop();
}

TEST_CASE("websocket: malformed messages leave the config untouched")
{
    TransferConfig config = TransferConfig::defaults({"left", "rest", "right"});
    WsHandlers h;
    h.get_config = [&] { return config; };
    h.set_config = [&](const TransferConfig& c) { config = c; };
    WsServer server(h);
    CHECK(server.handle_message("not json").empty());
    CHECK(server.handle_message(R"({"type":"set_threshold","class":"up","value":0.7})").empty());
    CHECK(server.handle_message(R"({"type":"set_threshold","class":"rest","value":0.1})").empty());
    CHECK(config.thresholds[1] == 0.5);
    const auto fail = server.handle_message(R"({"type":"game_event","event":"fail","ts":1})");
    REQUIRE(fail.size() == 1);
    CHECK(fail[0].at("success") == false);
    CHECK(server.handle_message(R"({"type":"game_event","event":"qte_start:left","ts":1})").empty());
}

TEST_CASE("websocket: an occupied port is a startup error")
{
    WsServer first({});
    first.start();
    WsServer second({}, "127.0.0.1", first.port());
    try {
        second.start();
        FAIL("expected a startup error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kStartup);
    }
    first.stop();
}
