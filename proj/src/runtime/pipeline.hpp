#pragma once

#include "runtime/bounded_queue.hpp"
#include "runtime/latency.hpp"
#include "runtime/online_chain.hpp"
#include "runtime/sources.hpp"
#include "runtime/transfer.hpp"

#include <atomic>
#include <functional>
#include <mutex>
#include <thread>

namespace mibci::runtime {

enum class MessageKind { kRawChunk, kPreprocessedChunk, kClassProbs, kControlFrame };

const char* to_string(MessageKind kind);

struct StageMessage {
    MessageKind kind = MessageKind::kRawChunk;
    std::uint64_t seq = 0;
    double stream_ts = 0.0;    // stream time of the first frame (chunks) or newest frame (probs)
    Eigen::MatrixXd samples;   // raw or preprocessed chunk
    Eigen::VectorXd probs;     // class probabilities
    Eigen::VectorXd stddev;
    LatencyEntry stamps;
};

struct PipelineConfig {
    TransferConfig transfer;
    ClassifierOptions classifier;
    std::size_t queue_capacity = 32;
};

struct PipelineStats {
    std::uint64_t chunks = 0;
    std::uint64_t preprocessed = 0;
    std::uint64_t classifications = 0;
    std::uint64_t frames = 0;
    std::uint64_t dropped_raw = 0;
    std::uint64_t dropped_preprocessed = 0;
    std::uint64_t dropped_probs = 0;
    std::size_t asr_windows_modified = 0;
    bool finished = false;

    std::uint64_t dropped() const { return dropped_raw + dropped_preprocessed + dropped_probs; }
    nlohmann::json to_json() const;
};

// Four stages connected by bounded drop-oldest queues:
//   source -> preprocess -> classify -> transfer
// Each stage owns its mutable state. Callbacks run on the transfer thread and
// must not block.
class Pipeline {
public:
    using FrameCallback = std::function<void(const ControlFrame&)>;
    using MarkerCallback = std::function<void(const signal::Marker&)>;

    /// Throws kStartup on a model/montage mismatch and kConfig on an invalid transfer table.
    Pipeline(std::shared_ptr<const classify::ModelBundle> bundle, std::unique_ptr<StreamSource> source,
        PipelineConfig config);
    ~Pipeline();

    Pipeline(const Pipeline&) = delete;
    Pipeline& operator=(const Pipeline&) = delete;

    void on_frame(FrameCallback callback);
    /// Called for every in-band marker as it passes the preprocessing stage.
    void on_marker(MarkerCallback callback);

    void start();
    /// Blocks until the source is exhausted and every stage has drained.
    void wait();
    /// Interrupts the source, discards queued messages and joins all stages.
    void stop();
    bool running() const noexcept { return started_ && !joined_; }

    PipelineStats stats() const;
    std::vector<LatencyEntry> ledger() const;
    std::vector<signal::Marker> markers() const;
    std::vector<ControlFrame> frames() const;

    TransferConfig transfer_config() const;
    /// Validated whole-value replacement, picked up at the next tick.
    void set_transfer_config(const TransferConfig& config);
    /// Adds an out-of-band marker (e.g. a game event) to the session log.
    void inject_marker(const signal::Marker& marker);
    /// Stream time of the newest emitted frame.
    double stream_time() const;

private:
    void run_source();
    void run_preprocess();
    void run_classify();
    void run_transfer();
    void join_all();

    std::shared_ptr<const classify::ModelBundle> bundle_;
    std::unique_ptr<StreamSource> source_;
    PipelineConfig config_;
    Preprocessor preprocessor_;
    OnlineClassifier classifier_;

    BoundedQueue<StageMessage> raw_q_;
    BoundedQueue<StageMessage> pre_q_;
    BoundedQueue<StageMessage> probs_q_;

    std::vector<FrameCallback> frame_callbacks_;
    std::vector<MarkerCallback> marker_callbacks_;

    mutable std::mutex config_mutex_;
    std::shared_ptr<const TransferConfig> transfer_config_;

    mutable std::mutex log_mutex_;
    std::vector<LatencyEntry> ledger_;
    std::vector<signal::Marker> markers_;
    std::vector<ControlFrame> frames_;
    double stream_time_ = 0.0;

    std::atomic<std::uint64_t> chunks_ {0}, preprocessed_ {0}, classifications_ {0}, emitted_ {0};
    std::atomic<std::size_t> asr_modified_ {0};
    std::atomic<bool> aborting_ {false};
    bool started_ = false;
    bool joined_ = false;
    std::mutex lifecycle_mutex_;
    std::thread source_thread_, preprocess_thread_, classify_thread_, transfer_thread_;
};

} // namespace mibci::runtime
