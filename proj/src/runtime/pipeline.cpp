#include "runtime/pipeline.hpp"

#include "common/error.hpp"

namespace mibci::runtime {

const char* to_string(MessageKind kind)
{
    switch (kind) {
    case MessageKind::kRawChunk: return "raw_chunk";
    case MessageKind::kPreprocessedChunk: return "preprocessed_chunk";
    case MessageKind::kClassProbs: return "class_probs";
    case MessageKind::kControlFrame: return "control_frame";
    }
    return "?";
}

nlohmann::json PipelineStats::to_json() const
{
    return {{"chunks", chunks}, {"preprocessed", preprocessed}, {"classifications", classifications},
        {"frames", frames},
        {"dropped", {{"raw", dropped_raw}, {"preprocessed", dropped_preprocessed}, {"probs", dropped_probs}}},
        {"asr_windows_modified", asr_windows_modified}, {"finished", finished}};
}

Pipeline::Pipeline(std::shared_ptr<const classify::ModelBundle> bundle, std::unique_ptr<StreamSource> source,
    PipelineConfig config)
    : bundle_(std::move(bundle))
    , source_(std::move(source))
    , config_(std::move(config))
    , preprocessor_(*bundle_, source_->montage())
    , classifier_(bundle_, config_.classifier)
    , raw_q_(config_.queue_capacity)
    , pre_q_(config_.queue_capacity)
    , probs_q_(config_.queue_capacity)
{
    config_.transfer.validate();
    require(config_.transfer.classes == bundle_->class_names, ErrorCode::kStartup,
        "transfer config classes differ from the model classes");
    transfer_config_ = std::make_shared<const TransferConfig>(config_.transfer);
}

Pipeline::~Pipeline()
{
    stop();
}

void Pipeline::on_frame(FrameCallback callback)
{
    require(!started_, ErrorCode::kParameter, "callbacks must be registered before start");
    frame_callbacks_.push_back(std::move(callback));
}

void Pipeline::on_marker(MarkerCallback callback)
{
    require(!started_, ErrorCode::kParameter, "callbacks must be registered before start");
    marker_callbacks_.push_back(std::move(callback));
}

void Pipeline::start()
{
    std::lock_guard lock(lifecycle_mutex_);
    require(!started_, ErrorCode::kParameter, "pipeline already started");
    started_ = true;
    transfer_thread_ = std::thread([this] { run_transfer(); });
    classify_thread_ = std::thread([this] { run_classify(); });
    preprocess_thread_ = std::thread([this] { run_preprocess(); });
    source_thread_ = std::thread([this] { run_source(); });
}

void Pipeline::join_all()
{
    std::lock_guard lock(lifecycle_mutex_);
    if (!started_ || joined_)
        return;
    for (std::thread* t : {&source_thread_, &preprocess_thread_, &classify_thread_, &transfer_thread_})
        if (t->joinable())
            t->join();
    joined_ = true;
}

void Pipeline::wait()
{
    join_all();
}

void Pipeline::stop()
{
    if (!started_)
        return;
    aborting_ = true;
    source_->interrupt();
    for (auto* q : {&raw_q_, &pre_q_, &probs_q_}) {
        q->clear();
        q->close();
    }
    join_all();
}

void Pipeline::run_source()
{
    while (!aborting_) {
        std::optional<SourceChunk> chunk;
        try {
            chunk = source_->next();
        } catch (const std::exception&) {
            break;
        }
        if (!chunk)
            break;
        StageMessage m;
        m.kind = MessageKind::kRawChunk;
        m.seq = chunk->seq;
        m.stream_ts = chunk->chunk.start_timestamp;
        m.samples = std::move(chunk->chunk.samples);
        m.stamps.seq = chunk->seq;
        m.stamps.start[0] = chunk->nominal_ts;
        m.stamps.done[0] = chunk->emitted_ts;
        if (!chunk->markers.empty()) {
            std::lock_guard lock(log_mutex_);
            for (const auto& mk : chunk->markers)
                markers_.push_back(mk);
        }
        for (const auto& mk : chunk->markers)
            for (const auto& cb : marker_callbacks_)
                cb(mk);
        ++chunks_;
        raw_q_.push(std::move(m));
    }
    raw_q_.close();
}

void Pipeline::run_preprocess()
{
    while (auto m = raw_q_.pop()) {
        if (aborting_)
            break;
        m->stamps.start[1] = monotonic_now();
        m->samples = preprocessor_.process(m->samples);
        m->kind = MessageKind::kPreprocessedChunk;
        m->stamps.done[1] = monotonic_now();
        ++preprocessed_;
        asr_modified_ = preprocessor_.asr_windows_modified();
        pre_q_.push(std::move(*m));
    }
    pre_q_.close();
}

void Pipeline::run_classify()
{
    while (auto m = pre_q_.pop()) {
        if (aborting_)
            break;
        const double start = monotonic_now();
        const auto results = classifier_.push(m->samples, m->stream_ts);
        const double done = monotonic_now();
        for (const auto& r : results) {
            StageMessage out;
            out.kind = MessageKind::kClassProbs;
            out.seq = m->seq;
            out.stream_ts = r.ts;
            out.probs = r.probs;
            out.stddev = r.stddev;
            out.stamps = m->stamps;
            out.stamps.start[2] = start;
            out.stamps.done[2] = done;
            ++classifications_;
            probs_q_.push(std::move(out));
        }
    }
    probs_q_.close();
}

void Pipeline::run_transfer()
{
    TransferState state;
    while (auto m = probs_q_.pop()) {
        if (aborting_)
            break;
        m->stamps.start[3] = monotonic_now();
        std::shared_ptr<const TransferConfig> cfg;
        {
            std::lock_guard lock(config_mutex_);
            cfg = transfer_config_;
        }
        if (state.buffer.size() > cfg->buffer_len)
            state.buffer.erase(state.buffer.begin(),
                state.buffer.begin() + static_cast<std::ptrdiff_t>(state.buffer.size() - cfg->buffer_len));
        const ControlFrame frame = transfer_step(state, *cfg, m->probs, m->stream_ts);
        m->stamps.done[3] = monotonic_now();
        {
            std::lock_guard lock(log_mutex_);
            ledger_.push_back(m->stamps);
            frames_.push_back(frame);
            stream_time_ = frame.ts;
        }
        ++emitted_;
        for (const auto& cb : frame_callbacks_)
            cb(frame);
    }
}

PipelineStats Pipeline::stats() const
{
    PipelineStats s;
    s.chunks = chunks_;
    s.preprocessed = preprocessed_;
    s.classifications = classifications_;
    s.frames = emitted_;
    s.dropped_raw = raw_q_.dropped();
    s.dropped_preprocessed = pre_q_.dropped();
    s.dropped_probs = probs_q_.dropped();
    s.asr_windows_modified = asr_modified_;
    s.finished = joined_;
    return s;
}

std::vector<LatencyEntry> Pipeline::ledger() const
{
    std::lock_guard lock(log_mutex_);
    return ledger_;
}

std::vector<signal::Marker> Pipeline::markers() const
{
    std::lock_guard lock(log_mutex_);
    return markers_;
}

std::vector<ControlFrame> Pipeline::frames() const
{
    std::lock_guard lock(log_mutex_);
    return frames_;
}

TransferConfig Pipeline::transfer_config() const
{
    std::lock_guard lock(config_mutex_);
    return *transfer_config_;
}

void Pipeline::set_transfer_config(const TransferConfig& config)
{
    config.validate();
    require(config.classes == bundle_->class_names, ErrorCode::kConfig,
        "transfer config classes differ from the model classes");
    auto next = std::make_shared<const TransferConfig>(config);
    std::lock_guard lock(config_mutex_);
    transfer_config_ = std::move(next);
}

void Pipeline::inject_marker(const signal::Marker& marker)
{
    std::lock_guard lock(log_mutex_);
    markers_.push_back(marker);
}

double Pipeline::stream_time() const
{
    std::lock_guard lock(log_mutex_);
    return stream_time_;
}

} // namespace mibci::runtime
